"""
imaging
-------

Document image pre-processing, crop augmentation of (image, map)
pairs, and post-processing of predicted maps into word boxes.

"""
import dataclasses
import logging
import math

import cv2
import numpy
import scipy.ndimage

from .baseio import InvalidArgument
from .geometry import DEFAULT_SIGMA_RATIO, HeatMap, QuadBox


LOG = logging.getLogger(__name__)

CONTENT_PROFILE_FRACTION = 0.02

WHITE = 255


@dataclasses.dataclass(frozen=True, eq=False)
class RasterImage:
    """An (H, W) or (H, W, C) image of 8-bit samples, or of float
    samples in [0, 1].

    """
    samples: numpy.ndarray

    def __post_init__(self):
        samples = numpy.asarray(self.samples)
        if samples.ndim == 2:
            samples = samples[:, :, None]

        if samples.ndim != 3 or samples.shape[2] not in (1, 3):
            raise InvalidArgument(f"image must be HxW, HxWx1 or HxWx3: {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidArgument(f"empty image: {samples.shape}")

        if samples.dtype != numpy.uint8:
            samples = samples.astype(numpy.float64)
            if samples.size and (samples.min() < 0 or samples.max() > 1):
                raise InvalidArgument("float image samples must lie in [0, 1]")

        object.__setattr__(self, 'samples', samples)

    @property
    def height(self):
        return self.samples.shape[0]

    @property
    def width(self):
        return self.samples.shape[1]

    @property
    def channels(self):
        return self.samples.shape[2]

    @property
    def is_uint8(self):
        return self.samples.dtype == numpy.uint8

    def as_float(self):
        """Samples as float64 in [0, 1]."""
        if self.is_uint8:
            return self.samples.astype(numpy.float64) / 255.0
        return self.samples

    def as_uint8(self):
        if self.is_uint8:
            return self.samples
        return numpy.rint(self.samples * 255.0).astype(numpy.uint8)

    def to_gray(self):
        """Luma as an (H, W) float64 array in [0, 1]."""
        samples = self.as_float()
        if self.channels == 1:
            return samples[:, :, 0]
        return cv2.cvtColor(samples.astype(numpy.float32), cv2.COLOR_RGB2GRAY).astype(numpy.float64)

    def to_rgb(self):
        if self.channels == 3:
            return self
        return RasterImage(numpy.repeat(self.samples, 3, axis=2))


@dataclasses.dataclass(frozen=True)
class ContentRegion:
    """Pixel bounds, inclusive-exclusive."""

    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0


@dataclasses.dataclass(frozen=True)
class PostprocessParams:
    """Map-to-box parameters.

    ``restore_height`` widens each rectangle vertically to undo the
    thresholding of a cylindrical Gaussian of ``sigma_ratio``.

    """
    threshold: float = 0.4
    dilation_kernel: tuple = (3, 3)
    dilation_iters: int = 1
    min_box_area_px: int = 4
    method: str = 'label'
    restore_height: bool = True
    sigma_ratio: float = DEFAULT_SIGMA_RATIO

    METHODS = ('label', 'contour')

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise InvalidArgument(f"threshold must be in (0, 1): {self.threshold}")

        kernel = tuple(int(size) for size in self.dilation_kernel)
        if len(kernel) != 2 or any(size < 1 or size % 2 == 0 for size in kernel):
            raise InvalidArgument(f"dilation kernel must be two odd sizes: {self.dilation_kernel}")
        object.__setattr__(self, 'dilation_kernel', kernel)

        if self.dilation_iters < 0:
            raise InvalidArgument(f"dilation_iters must be non-negative: {self.dilation_iters}")
        if self.min_box_area_px < 0:
            raise InvalidArgument(f"min_box_area_px must be non-negative: {self.min_box_area_px}")
        if self.method not in self.METHODS:
            raise InvalidArgument(f"method must be one of {self.METHODS}: {self.method!r}")
        if not 0 < self.sigma_ratio <= 1:
            raise InvalidArgument(f"sigma_ratio must be in (0, 1]: {self.sigma_ratio}")

    @property
    def height_gain(self):
        """Ratio of a word's height to the height of the band in which
        its Gaussian profile exceeds ``threshold``.

        """
        if not self.restore_height:
            return 1.0
        band = 2.0 * self.sigma_ratio * math.sqrt(2.0 * math.log(1.0 / self.threshold))
        return max(1.0, 1.0 / band)


# pre-processing #

def _first_last_above(profile):
    baseline = profile.min()
    signal = profile - baseline
    peak = signal.max()
    if peak <= 0:
        return None

    (indices,) = numpy.nonzero(signal > CONTENT_PROFILE_FRACTION * peak)
    return (int(indices[0]), int(indices[-1]) + 1)


def detect_content_region(img):
    """Find the rectangle of the page which holds ink.

    Inverted intensity (dark text on light paper) is summed along each
    axis; the region spans the first-to-last index at which the profile
    rises above its baseline by more than 2% of its range. An axis whose
    profile is flat spans the whole image.

    """
    gray = img.to_gray()
    inverted = gray.max() - gray

    columns = _first_last_above(inverted.sum(axis=0)) or (0, img.width)
    rows = _first_last_above(inverted.sum(axis=1)) or (0, img.height)

    return ContentRegion(columns[0], columns[1], rows[0], rows[1])


@dataclasses.dataclass(frozen=True)
class PreprocessConfig:

    short_axis_target: int = 550
    lo_frac: float = 0.50
    hi_frac: float = 0.9995

    def __post_init__(self):
        if self.short_axis_target < 1:
            raise InvalidArgument(f"short_axis_target must be positive: {self.short_axis_target}")
        if not 0 <= self.lo_frac < self.hi_frac <= 1:
            raise InvalidArgument(f"need 0 <= lo_frac < hi_frac <= 1: {self.lo_frac}, {self.hi_frac}")

    def apply(self, img):
        return preprocess(img, self.short_axis_target, self.lo_frac, self.hi_frac)


@dataclasses.dataclass(frozen=True)
class PreprocessResult:

    image: RasterImage
    scale_x: float
    scale_y: float
    degenerate: bool = False


def window_intensities(samples, lo_frac=0.50, hi_frac=0.9995):
    """Map ``lo_frac * max`` to 0 and ``hi_frac * max`` to 255, linearly,
    clipping outside.

    Returns ``(uint8 samples, degenerate)``; a constant or black image
    cannot be windowed, and yields zeros.

    """
    samples = numpy.asarray(samples, dtype=numpy.float64)
    peak = samples.max()
    lo = lo_frac * peak
    hi = hi_frac * peak

    if peak <= 0 or hi <= lo or samples.min() == peak:
        return (numpy.zeros(samples.shape, dtype=numpy.uint8), True)

    windowed = (samples - lo) * (255.0 / (hi - lo))
    return (numpy.rint(numpy.clip(windowed, 0.0, 255.0)).astype(numpy.uint8), False)


def preprocess(img, short_axis_target=550, lo_frac=0.50, hi_frac=0.9995):
    """Resize ``img`` so its content region's short axis measures
    ``short_axis_target`` pixels, and window its intensities into
    [0, 255].

    Returns a ``PreprocessResult`` carrying the per-axis scale factors
    of the resize, for mapping coordinates back.

    """
    if short_axis_target < 1:
        raise InvalidArgument(f"short_axis_target must be positive: {short_axis_target}")
    if not 0 <= lo_frac < hi_frac <= 1:
        raise InvalidArgument(f"need 0 <= lo_frac < hi_frac <= 1: {lo_frac}, {hi_frac}")

    region = detect_content_region(img)
    factor = short_axis_target / min(region.width, region.height)

    width = max(1, int(round(img.width * factor)))
    height = max(1, int(round(img.height * factor)))

    samples = img.as_float().astype(numpy.float32)
    if (width, height) != (img.width, img.height):
        interpolation = cv2.INTER_AREA if factor < 1 else cv2.INTER_CUBIC
        samples = cv2.resize(samples, (width, height), interpolation=interpolation)
        if samples.ndim == 2:
            samples = samples[:, :, None]

    (windowed, degenerate) = window_intensities(numpy.clip(samples, 0.0, 1.0), lo_frac, hi_frac)
    if degenerate:
        LOG.warning("image intensities are constant; preprocessed image is blank")

    return PreprocessResult(
        image=RasterImage(windowed),
        scale_x=width / img.width,
        scale_y=height / img.height,
        degenerate=degenerate,
    )


def pad_to_multiple(img, multiple):
    """Pad ``img`` with white, at bottom & right, to dimensions divisible
    by ``multiple``.

    """
    pad_h = (-img.height) % multiple
    pad_w = (-img.width) % multiple
    if not pad_h and not pad_w:
        return img

    fill = WHITE if img.is_uint8 else 1.0
    samples = numpy.pad(img.samples, ((0, pad_h), (0, pad_w), (0, 0)), constant_values=fill)
    return RasterImage(samples)


# resampling #

CATMULL_ROM_A = -0.5


def cubic_kernel(distance, a=CATMULL_ROM_A):
    """Keys' cubic convolution kernel."""
    t = numpy.abs(numpy.asarray(distance, dtype=numpy.float64))
    near = ((a + 2) * t - (a + 3)) * t * t + 1
    far = ((a * t - 5 * a) * t + 8 * a) * t - 4 * a
    return numpy.where(t <= 1, near, numpy.where(t < 2, far, 0.0))


def cubic_weights(size_in, size_out, a=CATMULL_ROM_A):
    """The (size_out, size_in) matrix resampling one axis by cubic
    convolution, pixel centers aligned, edges replicated.

    """
    centers = (numpy.arange(size_out, dtype=numpy.float64) + 0.5) * (size_in / size_out) - 0.5
    base = numpy.floor(centers).astype(int)

    weights = numpy.zeros((size_out, size_in), dtype=numpy.float64)
    rows = numpy.arange(size_out)
    for tap in range(-1, 3):
        source = base + tap
        tap_weights = cubic_kernel(centers - source, a)
        numpy.add.at(weights, (rows, numpy.clip(source, 0, size_in - 1)), tap_weights)

    return weights


def bicubic_resize(heat_map, target_w, target_h):
    """Resample ``heat_map`` to ``target_w`` x ``target_h`` by
    Catmull-Rom bicubic convolution (a = -0.5), clipped to [0, 1].

    The result's scale follows the horizontal resize factor.

    """
    if target_w < 1 or target_h < 1:
        raise InvalidArgument(f"target dimensions must be positive: {target_w}x{target_h}")

    rows = cubic_weights(heat_map.height, target_h)
    columns = cubic_weights(heat_map.width, target_w)
    values = rows @ heat_map.values @ columns.T

    scale = heat_map.scale * target_w / heat_map.width
    return HeatMap(numpy.clip(values, 0.0, 1.0), scale=scale)


# augmentation #

def _map_stride(heat_map):
    stride = 1.0 / heat_map.scale
    if abs(stride - round(stride)) > 1e-9:
        raise InvalidArgument(f"map scale must be 1/integer: {heat_map.scale}")
    return int(round(stride))


def _pad_pair(img, heat_map, crop, stride):
    pad_h = max(0, crop - img.height)
    pad_w = max(0, crop - img.width)
    if not pad_h and not pad_w:
        return (img, heat_map)

    fill = WHITE if img.is_uint8 else 1.0
    samples = numpy.pad(img.samples, ((0, pad_h), (0, pad_w), (0, 0)), constant_values=fill)
    values = numpy.pad(
        heat_map.values,
        ((0, (img.height + pad_h) // stride - heat_map.height),
         (0, (img.width + pad_w) // stride - heat_map.width)),
    )
    return (RasterImage(samples), HeatMap(values, heat_map.scale))


def _crop_at(img, heat_map, crop, stride, dx, dy):
    side = crop // stride
    image_crop = RasterImage(img.samples[dy:(dy + crop), dx:(dx + crop)])
    map_crop = HeatMap(
        heat_map.values[(dy // stride):(dy // stride + side), (dx // stride):(dx // stride + side)],
        heat_map.scale,
    )
    return (image_crop, map_crop)


def generate_crop_pairs(img, heat_map, crop=128, count=1, seed=0):
    """Generate ``count`` aligned ``crop`` x ``crop`` crops of ``img``
    with the matching crops of its map.

    Offsets are drawn uniformly, on the grid of map pixels, so each map
    crop (of side ``crop * heat_map.scale``) covers exactly the field of
    view of its image crop. Images smaller than ``crop`` are first padded
    with white.

    """
    stride = _map_stride(heat_map)
    if crop % stride:
        raise InvalidArgument(f"crop {crop} is not a multiple of the map stride {stride}")

    (img, heat_map) = _pad_pair(img, heat_map, crop, stride)
    if heat_map.shape != (img.height // stride, img.width // stride):
        raise InvalidArgument(
            f"map {heat_map.shape} does not tile image {img.height}x{img.width} by {stride}"
        )

    rng = numpy.random.default_rng(seed)
    positions_x = (img.width - crop) // stride + 1
    positions_y = (img.height - crop) // stride + 1

    for _index in range(count):
        dx = stride * int(rng.integers(positions_x))
        dy = stride * int(rng.integers(positions_y))
        yield _crop_at(img, heat_map, crop, stride, dx, dy)


def random_crop_pair(img, heat_map, crop=128, rng_seed=0):
    """One aligned random crop of ``img`` and its map.

    See ``generate_crop_pairs``.

    """
    (pair,) = generate_crop_pairs(img, heat_map, crop, count=1, seed=rng_seed)
    return pair


# post-processing #

def dilate_mask(mask, params=PostprocessParams()):
    """Dilate a binary uint8 ``mask`` by ``params.dilation_iters`` passes
    of a ``params.dilation_kernel`` box.

    """
    if not params.dilation_iters:
        return mask

    (kernel_w, kernel_h) = params.dilation_kernel
    kernel = numpy.ones((kernel_h, kernel_w), dtype=numpy.uint8)
    return cv2.dilate(mask, kernel, iterations=params.dilation_iters)


def _label_components(dilated):
    (_count, labels) = cv2.connectedComponents(dilated, connectivity=8, ltype=cv2.CV_32S)
    return labels


def _trace_components(dilated):
    """Label components by filling their outer borders, as found by
    border following.

    """
    (contours, hierarchy) = cv2.findContours(dilated, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_NONE)
    labels = numpy.zeros(dilated.shape, dtype=numpy.int32)
    if hierarchy is None:
        return labels

    # outer borders have no parent; fill larger first so that components
    # lying within another's hole keep their own label
    outer = [index for index in range(len(contours)) if hierarchy[0][index][3] == -1]
    outer.sort(key=lambda index: -cv2.contourArea(contours[index]))

    for (label, index) in enumerate(outer, 1):
        cv2.drawContours(labels, contours, index, color=label, thickness=cv2.FILLED)

    return labels


def localize_from_map(heat_map, params=PostprocessParams(), scale_back=(1.0, 1.0)):
    """Extract word boxes from ``heat_map``.

    The map is binarized at ``params.threshold`` and dilated; each
    8-connected component of the dilated mask yields the bounding
    rectangle of its thresholded pixels (rectangles under
    ``params.min_box_area_px`` map pixels are dropped), widened vertically
    by ``params.height_gain``. Rectangles are returned in source-image
    pixels, dividing by ``heat_map.scale * scale_back``.

    """
    mask = (heat_map.values >= params.threshold).astype(numpy.uint8)
    if not mask.any():
        return []

    dilated = dilate_mask(mask, params)

    if params.method == 'label':
        labels = _label_components(dilated)
    else:
        labels = _trace_components(dilated)

    (sx, sy) = scale_back
    factor_x = heat_map.scale * sx
    factor_y = heat_map.scale * sy
    gain = params.height_gain

    rectangles = []
    for found in scipy.ndimage.find_objects(labels * mask):
        if found is None:
            continue

        (rows, columns) = found
        (x0, x1, y0, y1) = (columns.start, columns.stop, rows.start, rows.stop)
        if (x1 - x0) * (y1 - y0) < params.min_box_area_px:
            continue

        center_y = (y0 + y1) / 2.0
        half_height = gain * (y1 - y0) / 2.0
        rectangles.append((x0, center_y - half_height, x1, center_y + half_height))

    rectangles.sort(key=lambda rect: (rect[1], rect[0]))

    return [
        QuadBox.from_rect(x0 / factor_x, y0 / factor_y, x1 / factor_x, y1 / factor_y)
        for (x0, y0, x1, y1) in rectangles
    ]
