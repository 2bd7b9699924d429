"""
textmap: text localization maps for scanned documents.

Words are marked by cylindrical Gaussian maps, which a generator network
learns to predict from document images (trained with content, feature
and adversarial losses), and from which word boxes are recovered by
thresholding and connected-component analysis.

"""
from .baseio import (
    AnnotationParseError,
    ConfigError,
    DataError,
    InvalidArgument,
    NumericalAbort,
    PipeClosed,
    TextmapError,
    WeightsLoadError,
)
from .geometry import (
    GaussianPatchSpec,
    HeatMap,
    MapConfig,
    QuadBox,
    affine_from_quad,
    gaussian_patch,
    render_map,
)
from .imaging import (
    PostprocessParams,
    PreprocessConfig,
    RasterImage,
    bicubic_resize,
    detect_content_region,
    localize_from_map,
    preprocess,
    random_crop_pair,
)
from .pipeio import BatchPipe, pipe_batches


__all__ = (
    'AnnotationParseError',
    'ConfigError',
    'DataError',
    'InvalidArgument',
    'NumericalAbort',
    'PipeClosed',
    'TextmapError',
    'WeightsLoadError',
    'GaussianPatchSpec',
    'HeatMap',
    'MapConfig',
    'QuadBox',
    'affine_from_quad',
    'gaussian_patch',
    'render_map',
    'PostprocessParams',
    'PreprocessConfig',
    'RasterImage',
    'bicubic_resize',
    'detect_content_region',
    'localize_from_map',
    'preprocess',
    'random_crop_pair',
    'BatchPipe',
    'pipe_batches',
)


__version__ = '0.1.0'
