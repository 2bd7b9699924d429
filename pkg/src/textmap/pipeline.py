"""
pipeline
--------

Whole-document operations composed of the primitives: predicting the
text localization map of an image, detecting its word boxes, and fitting
networks to a set of corpus documents.

"""
import logging

import numpy
import torch

from . import dataset, imaging, network, training
from .baseio import InvalidArgument, read_archive
from .geometry import HeatMap
from .imaging import PostprocessParams, PreprocessConfig


LOG = logging.getLogger(__name__)


def image_tensor(img, dtype=torch.float32):
    """The (1, 3, H, W) network input of ``img``, in [0, 1]."""
    samples = img.to_rgb().as_uint8()
    tensor = torch.from_numpy(numpy.ascontiguousarray(samples)).to(dtype) / 255.0
    return tensor.permute(2, 0, 1).unsqueeze(0).contiguous()


def predict_map(generator, img, preprocess_cfg=PreprocessConfig()):
    """The text localization map of ``img``, at the image's own
    resolution.

    The image is preprocessed and padded to a multiple of the generator's
    stride; the three output channels are averaged, brought from [-1, 1]
    to [0, 1], and upsampled bicubically back to the source image.

    """
    stride = generator.config.feature_stride
    result = preprocess_cfg.apply(img)
    padded = imaging.pad_to_multiple(result.image, stride)

    dtype = next(generator.module.parameters()).dtype
    output = generator(image_tensor(padded, dtype))
    values = ((output[0].mean(dim=0) + 1.0) / 2.0).clamp(0.0, 1.0)
    predicted = HeatMap(values.double().numpy(), scale=1.0 / stride)

    # the padded map covers more than the source image; crop after resizing
    target_w = max(img.width, int(round(padded.width / result.scale_x)))
    target_h = max(img.height, int(round(padded.height / result.scale_y)))
    upsampled = imaging.bicubic_resize(predicted, target_w, target_h)

    return HeatMap(upsampled.values[:img.height, :img.width], scale=1.0)


def detect_boxes(generator, img, preprocess_cfg=PreprocessConfig(),
                 postprocess=PostprocessParams()):
    """Word boxes of ``img``, in its pixels."""
    return imaging.localize_from_map(predict_map(generator, img, preprocess_cfg), postprocess)


def load_generator(path, dtype=torch.float32):
    """The generator of the checkpoint at ``path``."""
    (arrays, manifest) = read_archive(path)
    config = network.GeneratorConfig(**manifest['generator'])
    generator = network.build_generator(config, dtype=dtype)
    generator.load_state_arrays(network.split_prefixed(arrays, 'generator'))
    return generator


def fit_samples(samples, config, out_dir=None, cache_dir=None, resume=True):
    """Train networks on ``samples`` per ``config`` (a ``RunConfig``).

    Training pairs are built (and cached at ``cache_dir``), cropped once
    into the run's crop bank, and trained upon to
    ``config.training.run.total_steps``. Returns the final ``TrainState``.

    """
    samples = list(samples)
    if not samples:
        raise InvalidArgument("no samples to train on")

    pairs = dataset.build_training_pairs(samples, config.preprocess, config.map, cache_dir)
    if not pairs:
        raise InvalidArgument("none of the samples could be read")

    run = config.training.run
    bank = training.CropBank.from_pairs(pairs, run.crop, run.crops_per_image, run.seed)

    state = training.TrainState.initial(
        config.network.generator,
        config.network.discriminator,
        config.training.optimizer,
        seed=run.seed,
    )

    weights = config.training.loss
    feature_net = network.build_feature_net(config.network.feature) if weights.r else None

    LOG.info("training on %d documents (%d crops) for %d steps",
             len(pairs), len(bank), run.total_steps)
    return training.train_loop(run, bank, state, feature_net, weights, out_dir, resume)
