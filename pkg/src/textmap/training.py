"""
training
--------

The composite content + feature loss, the adversarial losses, and the
alternating optimization of generator and discriminator.

"""
import copy
import dataclasses
import logging
import math
import pathlib
import re

import numpy
import torch

from . import baseio, csvio, imaging, network, pipeio
from .baseio import InvalidArgument, NumericalAbort


LOG = logging.getLogger(__name__)

SCORE_EPSILON = 1e-7

LOSS_FIELDS = ('step', 'd_loss', 'g_adv', 'content', 'feature')

CHECKPOINT_PATTERN = re.compile(r'^checkpoint-(\d+)\.npz$')

ARCHIVE_VERSION = 1


@dataclasses.dataclass(frozen=True)
class LossWeights:

    q: float = 1.0
    r: float = 0.001
    adv: float = 0.001

    def __post_init__(self):
        for field in dataclasses.fields(self):
            if getattr(self, field.name) < 0:
                raise InvalidArgument(f"loss weight {field.name} must be >= 0")


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:

    algorithm: str = 'adam'
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.algorithm != 'adam':
            raise InvalidArgument(f"unsupported optimizer: {self.algorithm!r}")
        if not self.lr > 0:
            raise InvalidArgument(f"learning rate must be positive: {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidArgument(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")

    def build(self, parameters):
        return torch.optim.Adam(
            parameters,
            lr=self.lr,
            betas=(self.beta1, self.beta2),
            eps=self.eps,
        )


@dataclasses.dataclass(frozen=True)
class TrainRunConfig:
    """Run length and batching.

    The defaults crop each training image 100 times (``crops_per_image``)
    at 128 px, and train over 120,000 batches of 8.

    """
    batch_size: int = 8
    total_steps: int = 120_000
    crop: int = 128
    crops_per_image: int = 100
    checkpoint_every: int = 1000
    log_every: int = 100
    seed: int = 0
    prefetch: int = 4

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1: {self.batch_size}")
        if self.total_steps < 0:
            raise InvalidArgument(f"total_steps must be >= 0: {self.total_steps}")
        if self.crops_per_image < 1:
            raise InvalidArgument(f"crops_per_image must be >= 1: {self.crops_per_image}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise InvalidArgument("checkpoint_every and log_every must be >= 1")


@dataclasses.dataclass
class StepLosses:

    step: int
    d_loss: float
    g_adv: float
    content: float
    feature: float

    def record(self):
        return dataclasses.asdict(self)


class TrainState:
    """Everything a run owns and mutates: both networks, their
    optimizers, the step counter and the run seed.

    """
    def __init__(self, generator, discriminator, optimizer_config=OptimizerConfig(), seed=0):
        self.generator = generator
        self.discriminator = discriminator
        self.optimizer_config = optimizer_config
        self.optimizer_g = optimizer_config.build(generator.module.parameters())
        self.optimizer_d = optimizer_config.build(discriminator.module.parameters())
        self.step = 0
        self.seed = seed

    @classmethod
    def initial(cls, generator_config=network.GeneratorConfig(),
                discriminator_config=network.DiscriminatorConfig(),
                optimizer_config=OptimizerConfig(), seed=0, dtype=torch.float32):
        generator = network.build_generator(generator_config, seed=seed, dtype=dtype)
        discriminator = network.build_discriminator(discriminator_config, seed=seed + 1, dtype=dtype)
        return cls(generator, discriminator, optimizer_config, seed)

    @property
    def dtype(self):
        return next(self.generator.module.parameters()).dtype

    # checkpoints #

    def save(self, path, extra=None):
        arrays = {}
        for (prefix, handle) in (('generator', self.generator), ('discriminator', self.discriminator)):
            for (name, array) in handle.state_arrays().items():
                arrays[f'{prefix}/{name}'] = array

        for (prefix, optimizer) in (('optimizer_g', self.optimizer_g), ('optimizer_d', self.optimizer_d)):
            for (index, slots) in optimizer.state_dict()['state'].items():
                for (slot, value) in slots.items():
                    arrays[f'{prefix}/{index}/{slot}'] = numpy.array(
                        value.detach().cpu().numpy() if torch.is_tensor(value) else value
                    )

        arrays['rng/torch'] = torch.get_rng_state().numpy().copy()

        manifest = {
            'version': ARCHIVE_VERSION,
            'step': self.step,
            'seed': self.seed,
            'generator': dataclasses.asdict(self.generator.config),
            'discriminator': dataclasses.asdict(self.discriminator.config),
            'optimizer': dataclasses.asdict(self.optimizer_config),
        }
        manifest.update(extra or {})

        baseio.write_archive(path, arrays, manifest)

    def load(self, path):
        """Restore this state from a checkpoint written by ``save``."""
        (arrays, manifest) = baseio.read_archive(path)

        self.generator.load_state_arrays(network.split_prefixed(arrays, 'generator'))
        self.discriminator.load_state_arrays(network.split_prefixed(arrays, 'discriminator'))

        for (prefix, optimizer) in (('optimizer_g', self.optimizer_g), ('optimizer_d', self.optimizer_d)):
            state = {}
            for (name, array) in network.split_prefixed(arrays, prefix).items():
                (index, slot) = name.split('/', 1)
                state.setdefault(int(index), {})[slot] = torch.as_tensor(numpy.array(array))

            optimizer.load_state_dict({
                'state': state,
                'param_groups': optimizer.state_dict()['param_groups'],
            })

        if 'rng/torch' in arrays:
            torch.set_rng_state(torch.from_numpy(arrays['rng/torch'].copy()))

        self.step = int(manifest['step'])
        self.seed = int(manifest.get('seed', self.seed))
        return manifest

    def snapshot(self):
        """An in-memory copy of what a step mutates, for ``restore``."""
        return {
            'generator': copy.deepcopy(self.generator.module.state_dict()),
            'discriminator': copy.deepcopy(self.discriminator.module.state_dict()),
            'optimizer_g': copy.deepcopy(self.optimizer_g.state_dict()),
            'optimizer_d': copy.deepcopy(self.optimizer_d.state_dict()),
            'rng': torch.get_rng_state(),
            'step': self.step,
        }

    def restore(self, snapshot):
        self.generator.module.load_state_dict(snapshot['generator'])
        self.discriminator.module.load_state_dict(snapshot['discriminator'])
        self.optimizer_g.load_state_dict(snapshot['optimizer_g'])
        self.optimizer_d.load_state_dict(snapshot['optimizer_d'])
        torch.set_rng_state(snapshot['rng'])
        self.step = snapshot['step']


# losses #

def to_feature_range(maps):
    """Re-expand tanh-ranged maps to [0, 255], as consumed by the feature
    net.

    """
    return (maps + 1.0) * 127.5


@dataclasses.dataclass
class LossBreakdown:

    total: torch.Tensor
    content: torch.Tensor
    feature: torch.Tensor


def content_feature_loss(pred, target, feature_net, weights):
    """``q * mean((target - pred)²) + r * mean((φ(target) - φ(pred))²)``.

    ``pred`` and ``target`` are tanh-ranged map batches of equal shape;
    φ is applied after re-expansion to [0, 255]. With ``r = 0`` the
    feature net is not evaluated, and may be ``None``.

    """
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch: {tuple(pred.shape)} != {tuple(target.shape)}")

    content = torch.mean((target - pred) ** 2)

    if weights.r:
        phi = feature_net.module if isinstance(feature_net, network.NetworkHandle) else feature_net
        feature = torch.mean((phi(to_feature_range(target)) - phi(to_feature_range(pred))) ** 2)
    else:
        feature = torch.zeros((), dtype=pred.dtype)

    total = weights.q * content + weights.r * feature
    return LossBreakdown(total, content, feature)


def adversarial_losses(d_real, d_fake):
    """Discriminator and (non-saturating) generator losses.

    ``d_loss = -mean(log D(real)) - mean(log(1 - D(fake)))``,
    ``g_adv_loss = -mean(log D(fake))``; scores are clamped to
    [1e-7, 1 - 1e-7].

    """
    d_real = torch.clamp(d_real, SCORE_EPSILON, 1.0 - SCORE_EPSILON)
    d_fake = torch.clamp(d_fake, SCORE_EPSILON, 1.0 - SCORE_EPSILON)

    d_loss = -torch.mean(torch.log(d_real)) - torch.mean(torch.log(1.0 - d_fake))
    g_adv_loss = -torch.mean(torch.log(d_fake))
    return (d_loss, g_adv_loss)


# steps #

def batch_tensors(images, maps, dtype=torch.float32):
    """Network tensors of a batch of uint8 image crops (N, H, W, 3) and
    [0, 1] map crops (N, h, w).

    Images scale to [0, 1]; maps to [-1, 1], replicated over 3 channels.

    """
    images = torch.as_tensor(numpy.asarray(images)).to(dtype) / 255.0
    maps = torch.as_tensor(numpy.asarray(maps)).to(dtype)

    inputs = images.permute(0, 3, 1, 2).contiguous()
    targets = (maps * 2.0 - 1.0).unsqueeze(1).expand(-1, 3, -1, -1).contiguous()
    return (inputs, targets)


def _check_finite(state, **losses):
    values = {name: value.detach().item() for (name, value) in losses.items()}
    if not all(math.isfinite(value) for value in values.values()):
        snapshot = dict(values, step=state.step)
        raise NumericalAbort(f"non-finite loss at step {state.step}: {values}", snapshot=snapshot)


def train_step(state, batch, feature_net, weights=LossWeights()):
    """One discriminator update on detached generator output, then one
    generator update on ``q·content + r·feature + adv·g_adv``.

    Mutates ``state`` (incrementing its step) and returns the step's
    ``StepLosses``.

    """
    (inputs, targets) = batch_tensors(*batch, dtype=state.dtype)
    generator = state.generator.module
    discriminator = state.discriminator.module

    generator.train()
    fake = generator(inputs)
    if fake.shape != targets.shape:
        raise InvalidArgument(f"generator output {tuple(fake.shape)} != target {tuple(targets.shape)}")

    # discriminator
    discriminator.train()
    discriminator.requires_grad_(True)
    state.optimizer_d.zero_grad()
    (d_loss, _g_adv) = adversarial_losses(discriminator(targets), discriminator(fake.detach()))
    _check_finite(state, d_loss=d_loss)
    d_loss.backward()
    state.optimizer_d.step()

    # generator -- discriminator frozen & in inference mode
    discriminator.eval()
    discriminator.requires_grad_(False)
    state.optimizer_g.zero_grad()

    breakdown = content_feature_loss(fake, targets, feature_net, weights)
    total = breakdown.total

    if weights.adv:
        g_adv = adversarial_losses(torch.ones(1, dtype=fake.dtype), discriminator(fake))[1]
        total = total + weights.adv * g_adv
    else:
        with torch.no_grad():
            g_adv = adversarial_losses(torch.ones(1, dtype=fake.dtype), discriminator(fake))[1]

    _check_finite(state, total=total, content=breakdown.content, feature=breakdown.feature)
    total.backward()
    state.optimizer_g.step()

    discriminator.requires_grad_(True)
    state.step += 1

    return StepLosses(
        step=state.step,
        d_loss=float(d_loss),
        g_adv=float(g_adv),
        content=float(breakdown.content),
        feature=float(breakdown.feature),
    )


# loop #

@dataclasses.dataclass(frozen=True, eq=False)
class CropBank:
    """Pre-generated crop pairs: uint8 images (N, c, c, 3) and [0, 1]
    maps (N, c/s, c/s), drawn from ``num_images`` documents.

    """
    images: numpy.ndarray
    maps: numpy.ndarray
    num_images: int = 0

    def __post_init__(self):
        if len(self.images) == 0:
            raise InvalidArgument("crop bank is empty")
        if len(self.images) != len(self.maps):
            raise InvalidArgument("crop bank images and maps differ in count")

    def __len__(self):
        return len(self.images)

    @classmethod
    def from_pairs(cls, pairs, crop=128, crops_per_image=100, seed=0):
        """Crop each ``(image, heat_map)`` pair ``crops_per_image`` times.

        Pairs may be given as tuples or as objects with ``image`` and
        ``heat_map`` attributes; each is cropped from a seed derived from
        ``seed`` and its index.

        """
        (images, maps) = ([], [])
        count = 0
        for (index, pair) in enumerate(pairs):
            (image, heat_map) = (pair.image, pair.heat_map) if hasattr(pair, 'heat_map') else pair
            crop_seed = numpy.random.SeedSequence([seed, index])
            for (image_crop, map_crop) in imaging.generate_crop_pairs(
                image.to_rgb(), heat_map, crop, crops_per_image, crop_seed,
            ):
                images.append(image_crop.as_uint8())
                maps.append(map_crop.values)
            count += 1

        if not count:
            raise InvalidArgument("no training pairs to crop")

        LOG.info("cropped %d pairs %d times each at %d px", count, crops_per_image, crop)
        return cls(numpy.stack(images), numpy.stack(maps), count)

    def batch(self, seed, step, batch_size):
        """The batch of ``step``: uniform indices drawn from (seed, step)."""
        rng = numpy.random.default_rng([seed, step])
        indices = rng.integers(len(self), size=batch_size)
        return (self.images[indices], self.maps[indices])


def checkpoint_path(out_dir, step):
    return pathlib.Path(out_dir) / 'checkpoints' / f'checkpoint-{step:07d}.npz'


def latest_checkpoint(out_dir):
    directory = pathlib.Path(out_dir) / 'checkpoints'
    if not directory.is_dir():
        return None

    found = [
        (int(match.group(1)), path)
        for path in directory.iterdir()
        for match in (CHECKPOINT_PATTERN.match(path.name),)
        if match
    ]
    return max(found)[1] if found else None


def _produce_batches(pipe, bank, seed, start, stop, batch_size):
    for step in range(start, stop):
        pipe.put(bank.batch(seed, step, batch_size))


def train_loop(cfg, bank, state, feature_net, weights=LossWeights(), out_dir=None, resume=True):
    """Train ``state`` to ``cfg.total_steps`` on batches drawn from
    ``bank``.

    With ``out_dir``, checkpoints are written every
    ``cfg.checkpoint_every`` steps and upon completion (or interruption),
    and losses are logged to ``loss.csv`` every ``cfg.log_every`` steps.
    With ``resume``, training continues from the latest checkpoint found
    there.

    """
    if out_dir is not None:
        out_dir = pathlib.Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        if resume:
            found = latest_checkpoint(out_dir)
            if found is not None:
                state.load(found)
                LOG.info("resumed from %s at step %d", found, state.step)

    log = None
    if out_dir is not None:
        log = csvio.CsvRecordLog(
            out_dir / 'loss.csv',
            LOSS_FIELDS,
            keep=lambda record, step=state.step: int(record['step']) <= step,
        )

    def checkpoint():
        if out_dir is not None:
            state.save(checkpoint_path(out_dir, state.step))

    try:
        with pipeio.pipe_batches(_produce_batches, bank, state.seed, state.step,
                                 cfg.total_steps, cfg.batch_size,
                                 buffer_size=cfg.prefetch) as batches:
            for batch in batches:
                # an interrupted step is rolled back: checkpoints fall upon step boundaries
                before = state.snapshot()
                try:
                    losses = train_step(state, batch, feature_net, weights)
                except KeyboardInterrupt:
                    state.restore(before)
                    raise

                if log is not None and state.step % cfg.log_every == 0:
                    log.write(losses.record())
                if state.step % cfg.log_every == 0:
                    LOG.info("step %d: %s", state.step, losses)

                if state.step % cfg.checkpoint_every == 0 and state.step < cfg.total_steps:
                    checkpoint()
    except NumericalAbort as exc:
        if out_dir is not None:
            baseio.write_json(out_dir / 'diagnostic.json', exc.snapshot)
        raise
    except KeyboardInterrupt:
        LOG.warning("interrupted at step %d; writing checkpoint", state.step)
        checkpoint()
        raise
    finally:
        if log is not None:
            log.close()

    checkpoint()
    return state
