"""
fewshot
-------

Measure how localization quality grows with the number of labeled
training documents.

A fixed pool of documents is sampled from the training corpus; one model
is trained upon the first *n* documents of the pool, for each *n*, and
each is evaluated upon the same evaluation set. The resulting curve is
written to ``fewshot.csv``::

    n,precision,recall,hmean,matched,num_detections,num_ground_truth
    1,...

"""
import logging
import pathlib

from textmap import csvio, dataset, evaluation, pipeline
from textmap.baseio import InvalidArgument


LOG = logging.getLogger(__name__)

DEFAULT_N_VALUES = tuple(range(1, 12))

CURVE_FIELDS = ('n', 'precision', 'recall', 'hmean', 'matched', 'num_detections', 'num_ground_truth')


def sample_pool(train_pool, n_values=DEFAULT_N_VALUES, seed=0):
    """The fixed pool of ``max(n_values)`` documents, drawn with
    ``seed``.

    """
    n_values = list(n_values)
    if not n_values:
        raise InvalidArgument("no few-shot sizes given")

    invalid = [n for n in n_values if n < 1]
    if invalid:
        raise InvalidArgument(f"few-shot sizes must be >= 1: {invalid}")

    size = max(n_values)
    if size > len(train_pool):
        raise InvalidArgument(f"training pool of {len(train_pool)} cannot supply {size} documents")

    return dataset.subset_sample(train_pool, size, seed)


def fewshot_experiment(train_pool, eval_set, config, n_values=DEFAULT_N_VALUES, seed=0,
                       nested=True, out_dir=None, cache_dir=None):
    """Train and evaluate one model per ``n`` in ``n_values``.

    Returns the list of ``(n, EvalReport)``. With ``nested``, model *n*
    trains on the first *n* documents of the fixed pool; otherwise each
    draws its own *n* from the pool.

    With ``out_dir``, each model's run directory is ``out_dir/n-NN``, and
    the curve is written to ``out_dir/fewshot.csv``.

    """
    train_pool = list(train_pool)
    eval_set = list(eval_set)
    if not eval_set:
        raise InvalidArgument("evaluation set is empty")

    pool = sample_pool(train_pool, n_values, seed)
    LOG.info("few-shot pool (seed %d): %s", seed, [sample.key for sample in pool])

    ground_truth = {sample.key: sample.quads for sample in eval_set}
    eval_images = {sample.key: sample.read_image() for sample in eval_set}

    curve = []
    for n in n_values:
        samples = pool[:n] if nested else dataset.subset_sample(pool, n, seed, nested=False)
        run_dir = pathlib.Path(out_dir) / f'n-{n:02d}' if out_dir is not None else None

        state = pipeline.fit_samples(samples, config, run_dir, cache_dir)

        detections = {
            key: pipeline.detect_boxes(state.generator, image, config.preprocess, config.postprocess)
            for (key, image) in eval_images.items()
        }
        report = evaluation.evaluate(detections, ground_truth, config.eval)
        LOG.info("n=%d: %s", n, report.summary())

        curve.append((n, report))

    if out_dir is not None:
        write_curve(pathlib.Path(out_dir) / 'fewshot.csv', curve)

    return curve


def write_curve(path, curve):
    csvio.write_records(
        path,
        (dict(report.to_dict(), n=n) for (n, report) in curve),
        CURVE_FIELDS,
    )
