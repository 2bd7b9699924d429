"""
config
------

The run configuration: one typed section per concern, read from JSON in
which every field is optional and any unknown key is an error.

"""
import dataclasses
import hashlib
import json
import os
import pathlib

from . import baseio
from .baseio import ConfigError, DataError, TextmapError
from .dataset import SyntheticDocSpec
from .evaluation import MatchParams
from .geometry import MapConfig
from .imaging import PostprocessParams, PreprocessConfig
from .network import DiscriminatorConfig, FeatureNetConfig, GeneratorConfig
from .training import LossWeights, OptimizerConfig, TrainRunConfig


CACHE_ENV = 'TLGAN_CACHE_DIR'

DEFAULT_CACHE_DIR = pathlib.Path('~/.cache/textmap')


@dataclasses.dataclass(frozen=True)
class NetworkConfig:

    generator: GeneratorConfig = GeneratorConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig()
    feature: FeatureNetConfig = FeatureNetConfig()


@dataclasses.dataclass(frozen=True)
class TrainingConfig:

    run: TrainRunConfig = TrainRunConfig()
    loss: LossWeights = LossWeights()
    optimizer: OptimizerConfig = OptimizerConfig()


@dataclasses.dataclass(frozen=True)
class PathsConfig:

    data: str = None
    out: str = None
    cache: str = None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """All sections of a run.

    The generator's feature stride must equal the map stride; the
    localizer's sigma ratio must equal that of the rendered maps.

    """
    preprocess: PreprocessConfig = PreprocessConfig()
    map: MapConfig = MapConfig()
    network: NetworkConfig = NetworkConfig()
    training: TrainingConfig = TrainingConfig()
    postprocess: PostprocessParams = PostprocessParams()
    eval: MatchParams = MatchParams()
    paths: PathsConfig = PathsConfig()
    synth: SyntheticDocSpec = SyntheticDocSpec()

    def __post_init__(self):
        if self.network.generator.feature_stride != self.map.stride:
            raise ConfigError(
                f"network.generator.feature_stride ({self.network.generator.feature_stride}) "
                f"must equal map.stride ({self.map.stride})"
            )
        if self.postprocess.sigma_ratio != self.map.sigma_ratio:
            raise ConfigError(
                f"postprocess.sigma_ratio ({self.postprocess.sigma_ratio}) "
                f"must equal map.sigma_ratio ({self.map.sigma_ratio})"
            )

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @property
    def seed(self):
        return self.training.run.seed

    def cache_dir(self):
        """Pair cache directory: ``$TLGAN_CACHE_DIR``, else
        ``paths.cache``, else ``~/.cache/textmap``.

        """
        configured = os.environ.get(CACHE_ENV) or self.paths.cache or DEFAULT_CACHE_DIR
        return pathlib.Path(configured).expanduser()

    def replace(self, **overrides):
        """A copy with dotted-path fields replaced.

        Overrides apply together, so fields which must agree may change
        in one call. For example::

            >>> RunConfig().replace(**{'training.run.total_steps': 0}).training.run.total_steps
            0

        """
        data = self.to_dict()
        for (dotted, value) in overrides.items():
            _set_path(data, dotted.split('.'), value, dotted)
        return config_from_dict(data)


def _set_path(data, parts, value, dotted):
    (name, *rest) = parts
    if not isinstance(data, dict) or name not in data:
        raise ConfigError(f"unknown configuration key: {dotted}")

    if rest:
        _set_path(data[name], rest, value, dotted)
    else:
        data[name] = dataclasses.asdict(value) if dataclasses.is_dataclass(value) else value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'configuration'}: expected an object, got {type(data).__name__}")

    fields = {field.name: field for field in dataclasses.fields(cls) if field.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        prefix = f'{where}.' if where else ''
        raise ConfigError(f"unknown configuration key: {prefix}{unknown[0]}")

    kwargs = {}
    for (name, value) in data.items():
        path = f'{where}.{name}' if where else name
        default = fields[name].default

        if dataclasses.is_dataclass(default):
            value = _build(type(default), value, path)
        elif isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)

        kwargs[name] = value

    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TextmapError, TypeError) as exc:
        raise ConfigError(f"{where or 'configuration'}: {exc}") from exc


def config_from_dict(data):
    return _build(RunConfig, data, '')


def load_config(path=None):
    """Read the ``RunConfig`` at ``path``; defaults without a path."""
    if path is None:
        return RunConfig()

    try:
        data = baseio.read_json(path)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_config(directory, config, name='config.json'):
    """Echo the resolved ``config`` to ``name`` in ``directory``."""
    path = pathlib.Path(directory) / name
    baseio.write_text(path, config.to_json())
    return path
