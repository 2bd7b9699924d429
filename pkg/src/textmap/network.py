"""
network
-------

The map generator, the map discriminator and the frozen feature
extractor, wrapped in ``NetworkHandle``.

Parameter counts follow the Keras convention: batch-norm moving
statistics count as (non-trainable) parameters.

"""
import contextlib
import dataclasses
import hashlib
import logging
import pathlib

import numpy
import torch
import torchvision
from torch import nn

from . import baseio
from .baseio import InvalidArgument, WeightsLoadError


LOG = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class GeneratorConfig:

    in_channels: int = 3
    base_channels: int = 64
    num_res_blocks: int = 16
    head_kernel: int = 9
    block_kernel: int = 3
    feature_stride: int = 4
    expand_channels: int = 256
    out_channels: int = 3

    def __post_init__(self):
        if self.feature_stride < 1:
            raise InvalidArgument(f"feature_stride must be >= 1: {self.feature_stride}")
        if self.num_res_blocks < 1:
            raise InvalidArgument(f"num_res_blocks must be >= 1: {self.num_res_blocks}")
        for name in ('head_kernel', 'block_kernel'):
            if getattr(self, name) % 2 == 0:
                raise InvalidArgument(f"{name} must be odd: {getattr(self, name)}")


@dataclasses.dataclass(frozen=True)
class DiscriminatorConfig:

    in_channels: int = 3
    channels: tuple = (64, 64, 128, 128, 256, 256, 512, 512)
    kernel: int = 3
    leaky_slope: float = 0.2
    dense_units: int = 1024

    def __post_init__(self):
        object.__setattr__(self, 'channels', tuple(self.channels))

    @property
    def min_input(self):
        # stride 2 on every second conv
        return 2 ** (len(self.channels) // 2)


@dataclasses.dataclass(frozen=True)
class FeatureNetConfig:
    """VGG19 through ``block3_conv3``.

    ``weights`` names a torchvision VGG19 state-dict file; without one,
    ``fallback`` permits random frozen weights drawn from ``seed``.

    ``input_mode`` selects ImageNet normalization: ``'torch'`` (RGB,
    mean & std, for torchvision weights) or ``'caffe'`` (BGR, mean only).

    """
    weights: str = None
    fallback: bool = False
    seed: int = 0
    input_mode: str = 'torch'

    INPUT_MODES = ('torch', 'caffe')

    def __post_init__(self):
        if self.input_mode not in self.INPUT_MODES:
            raise InvalidArgument(f"input_mode must be one of {self.INPUT_MODES}: {self.input_mode!r}")


# modules #

def _same_conv(in_channels, out_channels, kernel, stride=1):
    return nn.Conv2d(in_channels, out_channels, kernel, stride=stride, padding=kernel // 2)


class ResidualBlock(nn.Module):
    """conv, ReLU, batch-norm, conv, batch-norm, and the skip addition."""

    def __init__(self, channels, kernel):
        super().__init__()
        self.conv1 = _same_conv(channels, channels, kernel)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = _same_conv(channels, channels, kernel)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        residual = self.bn1(torch.relu(self.conv1(x)))
        residual = self.bn2(self.conv2(residual))
        return x + residual


class Generator(nn.Module):

    def __init__(self, config):
        super().__init__()
        self.config = config
        channels = config.base_channels

        self.head = _same_conv(config.in_channels, channels, config.head_kernel)
        self.blocks = nn.Sequential(*(
            ResidualBlock(channels, config.block_kernel) for _index in range(config.num_res_blocks)
        ))
        self.trunk_conv = _same_conv(channels, channels, config.block_kernel)
        self.trunk_bn = nn.BatchNorm2d(channels)
        self.expand = _same_conv(channels, config.expand_channels, config.block_kernel,
                                 stride=config.feature_stride)
        self.tail = _same_conv(config.expand_channels, config.out_channels, config.head_kernel)

    def forward(self, x):
        stride = self.config.feature_stride
        if x.shape[-2] % stride or x.shape[-1] % stride:
            raise InvalidArgument(
                f"input {tuple(x.shape[-2:])} cannot be tiled by stride {stride}"
            )

        skip = torch.relu(self.head(x))
        trunk = self.trunk_bn(self.trunk_conv(self.blocks(skip))) + skip
        expanded = torch.relu(self.expand(trunk))
        return torch.tanh(self.tail(expanded))


class Discriminator(nn.Module):

    def __init__(self, config):
        super().__init__()
        self.config = config

        layers = []
        in_channels = config.in_channels
        for (index, out_channels) in enumerate(config.channels):
            stride = 2 if index % 2 else 1
            layers.append(_same_conv(in_channels, out_channels, config.kernel, stride=stride))
            layers.append(nn.LeakyReLU(config.leaky_slope))
            if index > 0:
                layers.append(nn.BatchNorm2d(out_channels))
            in_channels = out_channels

        self.features = nn.Sequential(*layers)
        self.dense = nn.Linear(in_channels, config.dense_units)
        self.score = nn.Linear(config.dense_units, 1)
        self.leaky_slope = config.leaky_slope

    def forward(self, x):
        minimum = self.config.min_input
        if x.shape[-2] < minimum or x.shape[-1] < minimum:
            raise InvalidArgument(f"discriminator input {tuple(x.shape[-2:])} smaller than {minimum}")

        # dense layers act on each spatial position
        features = self.features(x).permute(0, 2, 3, 1)
        hidden = nn.functional.leaky_relu(self.dense(features), self.leaky_slope)
        return torch.sigmoid(self.score(hidden)).permute(0, 3, 1, 2)


VGG19_BLOCK3_CONV3 = 16

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CAFFE_MEAN_BGR = (103.939, 116.779, 123.68)


class FeatureNet(nn.Module):
    """VGG19 prefix consuming RGB samples in [0, 255]."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.features = torchvision.models.vgg19(weights=None).features[:VGG19_BLOCK3_CONV3]

        if config.input_mode == 'torch':
            mean = torch.tensor(IMAGENET_MEAN) * 255.0
            std = torch.tensor(IMAGENET_STD) * 255.0
        else:
            mean = torch.tensor(CAFFE_MEAN_BGR)
            std = torch.ones(3)

        self.register_buffer('mean', mean.view(1, 3, 1, 1), persistent=False)
        self.register_buffer('std', std.view(1, 3, 1, 1), persistent=False)

    def forward(self, x):
        if self.config.input_mode == 'caffe':
            x = x.flip(1)
        return self.features((x - self.mean) / self.std)


# handles #

@dataclasses.dataclass(frozen=True)
class ParameterInfo:

    name: str
    shape: tuple
    trainable: bool

    @property
    def size(self):
        return int(numpy.prod(self.shape, dtype=numpy.int64))


@dataclasses.dataclass(frozen=True)
class ParameterCount:

    total: int
    trainable: int
    non_trainable: int


class NetworkHandle:
    """A built network: its forward contract and its parameters.

    ``forward`` runs in inference mode; training code drives ``module``
    directly.

    """
    def __init__(self, module, config):
        self.module = module
        self.config = config

    def __repr__(self):
        return f"{self.__class__.__name__}({self.module.__class__.__name__}, {self.config})"

    def forward(self, x):
        was_training = self.module.training
        self.module.eval()
        try:
            with torch.no_grad():
                return self.module(x)
        finally:
            self.module.train(was_training)

    __call__ = forward

    def output_shape(self, input_shape):
        """Output shape (N, C, H, W) for ``input_shape`` (N, C, H, W)."""
        dtype = next(self.module.parameters()).dtype
        probe = torch.zeros(input_shape, dtype=dtype)
        return tuple(self.forward(probe).shape)

    def parameters(self):
        """Enumerate ``ParameterInfo``, moving statistics included."""
        for (name, param) in self.module.named_parameters():
            yield ParameterInfo(name, tuple(param.shape), param.requires_grad)

        for (name, buffer) in self.module.named_buffers():
            if name.endswith(('running_mean', 'running_var')):
                yield ParameterInfo(name, tuple(buffer.shape), False)

    def count_parameters(self):
        total = trainable = 0
        for info in self.parameters():
            total += info.size
            if info.trainable:
                trainable += info.size
        return ParameterCount(total, trainable, total - trainable)

    def state_arrays(self):
        """Named arrays of all persistent state (parameters & buffers)."""
        return {
            name: tensor.detach().cpu().numpy().copy()
            for (name, tensor) in self.module.state_dict().items()
        }

    def load_state_arrays(self, arrays):
        state = {name: torch.from_numpy(numpy.array(value)) for (name, value) in arrays.items()}
        try:
            self.module.load_state_dict(state)
        except RuntimeError as exc:
            raise WeightsLoadError(str(exc)) from exc

    def parameter_checksum(self):
        digest = hashlib.sha256()
        for (name, array) in sorted(self.state_arrays().items()):
            digest.update(name.encode('utf-8'))
            digest.update(numpy.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


@contextlib.contextmanager
def seeded(seed):
    """Draw from torch's global generator at ``seed``, restoring its
    prior state on exit.

    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


def build_generator(cfg=GeneratorConfig(), seed=0, dtype=torch.float32):
    with seeded(seed):
        module = Generator(cfg)
    return NetworkHandle(module.to(dtype), cfg)


def build_discriminator(cfg=DiscriminatorConfig(), seed=0, dtype=torch.float32):
    with seeded(seed):
        module = Discriminator(cfg)
    return NetworkHandle(module.to(dtype), cfg)


def _load_vgg_weights(features, path):
    path = pathlib.Path(path)
    try:
        state = torch.load(path, map_location='cpu', weights_only=True)
    except FileNotFoundError as exc:
        raise WeightsLoadError(f"{path}: no such weights file") from exc
    except Exception as exc:
        raise WeightsLoadError(f"{path}: {exc}") from exc

    if isinstance(state, dict) and 'state_dict' in state:
        state = state['state_dict']

    prefix = 'features.'
    wanted = {
        name[len(prefix):]: value
        for (name, value) in state.items()
        if name.startswith(prefix) and int(name[len(prefix):].split('.')[0]) < VGG19_BLOCK3_CONV3
    }

    try:
        features.load_state_dict(wanted)
    except RuntimeError as exc:
        raise WeightsLoadError(f"{path}: {exc}") from exc


def build_feature_net(cfg=FeatureNetConfig(), dtype=torch.float32):
    """VGG19 through ``block3_conv3``, frozen.

    Raises ``WeightsLoadError`` when ``cfg.weights`` cannot be loaded, or
    is absent, unless ``cfg.fallback`` is set.

    """
    with seeded(cfg.seed):
        module = FeatureNet(cfg)

    if cfg.weights:
        try:
            _load_vgg_weights(module.features, cfg.weights)
        except WeightsLoadError:
            if not cfg.fallback:
                raise
            LOG.warning("falling back to random frozen feature weights (seed %d)", cfg.seed)
    elif not cfg.fallback:
        raise WeightsLoadError("no feature net weights configured, and fallback not requested")

    module.requires_grad_(False)
    module.eval()
    return NetworkHandle(module.to(dtype), cfg)


# checkpoints #

def save_networks(path, handles, manifest):
    """Write named network handles' state to one archive.

    ``handles`` maps a prefix (*e.g.* ``'generator'``) to its handle.

    """
    arrays = {
        f'{prefix}/{name}': array
        for (prefix, handle) in handles.items()
        for (name, array) in handle.state_arrays().items()
    }
    baseio.write_archive(path, arrays, manifest)


def split_prefixed(arrays, prefix):
    marker = f'{prefix}/'
    return {
        name[len(marker):]: array
        for (name, array) in arrays.items()
        if name.startswith(marker)
    }
