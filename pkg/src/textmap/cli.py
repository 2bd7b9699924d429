"""
cli
---

The ``textmap`` command: reproducible runs of every stage, from
synthetic corpora to few-shot curves.

Every subcommand writing to ``--out`` echoes its resolved configuration
to ``config.json`` there, beside a ``manifest.yaml`` of the command,
configuration hash, seed and library versions.

Exit codes: 0 on success; 1 on usage or configuration error; 2 on data
error; 3 on numerical abort; 130 on interruption.

"""
import argparse
import logging
import pathlib
import sys

import cv2
import numpy
import PIL
import scipy
import torch
import torchvision
import yaml

import textmap
from textmap import baseio, config as configuration, dataset, evaluation, imaging, pipeline
from textmap.baseio import (
    ConfigError,
    DataError,
    InvalidArgument,
    NumericalAbort,
    TextmapError,
)
from textmap.geometry import HeatMap
from textmap.recipe.fewshot import fewshot_experiment
from textmap.training import checkpoint_path


LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_INTERRUPTED = 130


class UsageError(TextmapError, ValueError):

    _default_message_ = "invalid usage"


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# reporting #

def report(tag, *values):
    print(f'[{tag}]', *values)


def library_versions():
    # torch reports a str subclass, which safe_dump refuses
    versions = {
        'textmap': textmap.__version__,
        'numpy': numpy.__version__,
        'opencv': cv2.__version__,
        'pillow': PIL.__version__,
        'scipy': scipy.__version__,
        'torch': torch.__version__,
        'torchvision': torchvision.__version__,
    }
    return {name: str(version) for (name, version) in versions.items()}


def write_run_files(out_dir, command, config, beside_inputs=False):
    """Echo ``config`` and the run manifest into ``out_dir``.

    ``beside_inputs`` prefixes the file names with ``command``, leaving
    the run files of the directory's own run in place.

    """
    out_dir = pathlib.Path(out_dir)
    prefix = f'{command}.' if beside_inputs else ''
    configuration.write_config(out_dir, config, f'{prefix}config.json')

    manifest = {
        'command': command,
        'config_hash': config.config_hash(),
        'seed': config.seed,
        'versions': library_versions(),
    }
    baseio.write_text(out_dir / f'{prefix}manifest.yaml', yaml.safe_dump(manifest, sort_keys=True))


# inputs #

def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            flag = '--' + name.replace('_', '-')
            raise UsageError(f"{args.command}: {flag} is required")


def _image_inputs(path):
    """``(stem, path)`` of the image file at ``path``, or of those in
    directory ``path`` (or in its ``images/``).

    """
    path = pathlib.Path(path)
    if path.is_file():
        return [(path.stem, path)]

    if not path.is_dir():
        raise DataError(f"{path}: no such file or directory")

    directory = path / 'images' if (path / 'images').is_dir() else path
    return [
        (image_path.stem, image_path)
        for image_path in sorted(directory.iterdir())
        if image_path.suffix.lower() in baseio.IMAGE_SUFFIXES
    ]


def _read_raster(path):
    return imaging.RasterImage(baseio.read_image(path))


def predict_quantized_map(generator, img, config):
    """``predict_map`` at the 8-bit precision of a written map file."""
    heat_map = pipeline.predict_map(generator, img, config.preprocess)
    values = baseio.dequantize_map(baseio.quantize_map(heat_map.values))
    return HeatMap(values, scale=1.0)


# subcommands #

def cmd_synth(args, config):
    _require(args, 'out')

    entries = dataset.synth_corpus(args.docs, args.seed, config.synth, args.test_docs)
    samples = dataset.write_corpus(args.out, entries)
    write_run_files(args.out, 'synth', config)

    report('synth', f"{len(samples)} documents (seed {args.seed}):", args.out)


def cmd_maps(args, config):
    _require(args, 'data', 'out')

    samples = dataset.load_corpus(args.data)
    pairs = dataset.build_training_pairs(samples, config.preprocess, config.map, config.cache_dir())

    out_dir = pathlib.Path(args.out)
    for pair in pairs:
        baseio.write_image(out_dir / 'images' / f'{pair.key}.png', pair.image.as_uint8())
        baseio.write_map_png(out_dir / 'maps' / f'{pair.key}.png', pair.heat_map.values)

    write_run_files(out_dir, 'maps', config)
    report('maps', f"{len(pairs)} of {len(samples)} documents:", out_dir)


def cmd_train(args, config):
    _require(args, 'data', 'out')

    samples = dataset.load_corpus(args.data, split='train')
    if not samples:
        raise DataError(f"{args.data}: no training documents")

    write_run_files(args.out, 'train', config)
    state = pipeline.fit_samples(samples, config, args.out, config.cache_dir())
    report('train', f"step {state.step}:", checkpoint_path(args.out, state.step))


def cmd_infer(args, config):
    _require(args, 'checkpoint', 'data', 'out')

    generator = pipeline.load_generator(args.checkpoint)
    out_dir = pathlib.Path(args.out)

    inputs = _image_inputs(args.data)
    for (stem, path) in inputs:
        heat_map = predict_quantized_map(generator, _read_raster(path), config)
        baseio.write_map_png(out_dir / f'{stem}.png', heat_map.values)

    write_run_files(out_dir, 'infer', config)
    report('infer', f"{len(inputs)} maps:", out_dir)


def cmd_localize(args, config):
    _require(args, 'data', 'out')

    generator = pipeline.load_generator(args.checkpoint) if args.checkpoint else None

    boxes = {}
    for (stem, path) in _image_inputs(args.data):
        if generator is None:
            heat_map = HeatMap(baseio.read_map_png(path), scale=1.0)
        else:
            heat_map = predict_quantized_map(generator, _read_raster(path), config)
        boxes[stem] = imaging.localize_from_map(heat_map, config.postprocess)

    evaluation.write_box_dir(args.out, boxes)
    write_run_files(args.out, 'localize', config)
    report('localize', f"{sum(map(len, boxes.values()))} boxes in {len(boxes)} files:", args.out)


def _detect_corpus(checkpoint, samples, config):
    generator = pipeline.load_generator(checkpoint)
    return {
        sample.key: imaging.localize_from_map(
            predict_quantized_map(generator, sample.read_image(), config),
            config.postprocess,
        )
        for sample in samples
    }


def cmd_eval(args, config):
    if args.from_images:
        _require(args, 'checkpoint', 'data')
        samples = dataset.load_corpus(args.data, split=args.split)
        ground_truth = {sample.key: sample.quads for sample in samples}
        detections = _detect_corpus(args.checkpoint, samples, config)
    else:
        _require(args, 'det', 'gt')
        detections = evaluation.read_box_dir(args.det)
        ground_truth = evaluation.read_box_dir(args.gt)

        # images without any detections have no box file
        for key in ground_truth:
            detections.setdefault(key, [])

    result = evaluation.evaluate(detections, ground_truth, config.eval)

    if args.out:
        baseio.write_text(pathlib.Path(args.out) / 'report.json', result.to_json())
        write_run_files(args.out, 'eval', config)
    else:
        write_run_files(args.data or args.det, 'eval', config, beside_inputs=True)

    print(result.summary())


def cmd_fewshot(args, config):
    _require(args, 'data', 'out')

    train_pool = dataset.load_corpus(args.data, split='train')
    eval_set = dataset.load_corpus(args.data, split='test')
    if not eval_set:
        LOG.warning("%s: no test documents; evaluating on the training pool", args.data)
        eval_set = train_pool

    write_run_files(args.out, 'fewshot', config)
    curve = fewshot_experiment(
        train_pool,
        eval_set,
        config,
        n_values=args.n_values,
        seed=args.seed,
        nested=args.nested,
        out_dir=args.out,
        cache_dir=config.cache_dir(),
    )

    for (n, result) in curve:
        report('fewshot', f"n={n}", result.summary())


def cmd_plot(args, config):
    from textmap.ext import matplotlib as plots

    _require(args, 'data')

    data_dir = pathlib.Path(args.data)
    out_dir = pathlib.Path(args.out or data_dir)

    written = []
    if (data_dir / 'loss.csv').exists():
        written.append(plots.plot_loss_curves(data_dir / 'loss.csv', out_dir / 'loss.png'))
    if (data_dir / 'fewshot.csv').exists():
        written.append(plots.plot_fewshot_curve(data_dir / 'fewshot.csv', out_dir / 'fewshot.png'))

    if not written:
        raise DataError(f"{data_dir}: neither loss.csv nor fewshot.csv found")

    write_run_files(out_dir, 'plot', config, beside_inputs=args.out is None)

    for path in written:
        report('plot', "saved:", path)


COMMANDS = {
    'synth': (cmd_synth, "generate a synthetic corpus"),
    'maps': (cmd_maps, "render the target maps of a corpus"),
    'train': (cmd_train, "train the map generator on a corpus"),
    'infer': (cmd_infer, "predict the maps of images"),
    'localize': (cmd_localize, "extract word boxes from maps (or images)"),
    'eval': (cmd_eval, "score detected boxes against ground truth"),
    'fewshot': (cmd_fewshot, "train & score models on growing training subsets"),
    'plot': (cmd_plot, "plot loss and few-shot curves"),
}


def _n_values(text):
    try:
        values = tuple(int(value) for value in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    return values


def build_parser(prog=None):
    parser = ArgumentParser(prog=prog, description="text localization maps")
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help="log progress (-v) or debugging detail (-vv)")

    subparsers = parser.add_subparsers(dest='command', metavar='command', required=True)

    for (name, (_func, description)) in COMMANDS.items():
        subparser = subparsers.add_parser(name, help=description, description=description)
        subparser.add_argument('--config', type=pathlib.Path,
                               help="run configuration (JSON)")
        subparser.add_argument('--seed', type=int,
                               help="run seed (default: from configuration, else 0)")
        subparser.add_argument('--out', type=pathlib.Path,
                               help="output directory")
        subparser.add_argument('--data', type=pathlib.Path,
                               help="input corpus, directory or file")

    synth = subparsers.choices['synth']
    synth.add_argument('--docs', type=int, default=20,
                       help="number of training documents (default: 20)")
    synth.add_argument('--test-docs', type=int, default=0,
                       help="number of test documents (default: 0)")

    for name in ('train', 'fewshot'):
        subparsers.choices[name].add_argument('--steps', type=int,
                                              help="override training.run.total_steps")

    for name in ('infer', 'localize', 'eval'):
        subparsers.choices[name].add_argument('--checkpoint', type=pathlib.Path,
                                              help="trained checkpoint (.npz)")

    evaluate = subparsers.choices['eval']
    evaluate.add_argument('--det', type=pathlib.Path, help="directory of detected boxes")
    evaluate.add_argument('--gt', type=pathlib.Path, help="directory of ground-truth boxes")
    evaluate.add_argument('--from-images', action='store_true',
                          help="detect boxes in the images of corpus --data with --checkpoint")
    evaluate.add_argument('--split', choices=dataset.SPLITS,
                          help="corpus split to score with --from-images (default: all)")

    fewshot = subparsers.choices['fewshot']
    fewshot.add_argument('--n-values', type=_n_values, default=(1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11),
                         help="comma-separated training subset sizes (default: 1,...,11)")
    fewshot.add_argument('--independent', action='store_false', dest='nested',
                         help="draw each subset independently rather than nested")

    return parser


def resolve_config(args):
    config = configuration.load_config(args.config)

    overrides = {}
    if args.seed is not None:
        overrides['training.run.seed'] = args.seed
    if getattr(args, 'steps', None) is not None:
        overrides['training.run.total_steps'] = args.steps

    config = config.replace(**overrides)
    args.seed = config.seed
    return config


def run(argv=None, prog=None):
    """Execute the command of ``argv``, returning its exit code."""
    try:
        args = build_parser(prog).parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format='%(levelname)s %(name)s: %(message)s',
    )

    (func, _description) = COMMANDS[args.command]

    try:
        config = resolve_config(args)
        report('seed', args.seed)
        func(args, config)
    except (UsageError, ConfigError, InvalidArgument) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"{args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"{args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        print(f"{args.command}: interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED

    return EXIT_OK


def main(prog=None, argv=None):
    sys.exit(run(argv, prog))
