"""
geometry
--------

Word quadrilaterals, and rendering of text localization maps.

A text localization map marks every word with a *cylindrical Gaussian*:
a patch which is constant along the word's baseline and Gaussian across
it. Each patch is warped onto its word box by the affine transform
fixing three of the box's corners, and patches are composed per pixel.

"""
import dataclasses
import logging
import math

import cv2
import numpy

from .baseio import InvalidArgument


LOG = logging.getLogger(__name__)

DEFAULT_SIGMA_RATIO = 0.25

# corner-3 residual (pixels) beyond which an affine fit is reported
AFFINE_RESIDUAL_WARN = 2.0


def _signed_area(points):
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(numpy.dot(x, numpy.roll(y, -1)) - numpy.dot(y, numpy.roll(x, -1)))


@dataclasses.dataclass(frozen=True)
class QuadBox:
    """A word location: four (x, y) corners in pixels, clockwise (on
    screen, with y pointing down) starting at the top-left.

    """
    corners: tuple

    def __post_init__(self):
        try:
            corners = tuple((float(x), float(y)) for (x, y) in self.corners)
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed quad corners: {self.corners!r}") from exc

        if len(corners) != 4:
            raise InvalidArgument(f"quad requires 4 corners, got {len(corners)}")

        if not all(math.isfinite(value) for corner in corners for value in corner):
            raise InvalidArgument(f"non-finite quad corners: {corners!r}")

        object.__setattr__(self, 'corners', corners)

        if self.area <= 0:
            raise InvalidArgument(f"degenerate quad: {corners!r}")

    @classmethod
    def from_rect(cls, x0, y0, x1, y1):
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @classmethod
    def from_flat(cls, values):
        values = list(values)
        if len(values) != 8:
            raise InvalidArgument(f"quad requires 8 coordinates, got {len(values)}")
        return cls(tuple(zip(values[0::2], values[1::2])))

    def as_array(self):
        return numpy.array(self.corners, dtype=numpy.float64)

    def flat(self):
        return tuple(value for corner in self.corners for value in corner)

    @property
    def area(self):
        return abs(_signed_area(self.as_array()))

    def bounds(self):
        """Axis-aligned bounding rectangle ``(x0, y0, x1, y1)``."""
        points = self.as_array()
        (x0, y0) = points.min(axis=0)
        (x1, y1) = points.max(axis=0)
        return (float(x0), float(y0), float(x1), float(y1))

    def scaled(self, sx, sy=None):
        sy = sx if sy is None else sy
        return QuadBox(tuple((x * sx, y * sy) for (x, y) in self.corners))

    def translated(self, dx, dy):
        return QuadBox(tuple((x + dx, y + dy) for (x, y) in self.corners))

    def ordered(self):
        """This quad with corners reordered clockwise, starting from the
        top-left corner (least ``x + y``; ties by ``y``).

        """
        points = self.as_array()

        # with y pointing down, a clockwise ring has positive signed area
        if _signed_area(points) < 0:
            points = points[::-1]

        start = min(range(4), key=lambda index: (points[index].sum(), points[index][1]))
        points = numpy.roll(points, -start, axis=0)
        return QuadBox(tuple(map(tuple, points.tolist())))


@dataclasses.dataclass(frozen=True)
class GaussianPatchSpec:

    width_px: int
    height_px: int
    sigma_ratio: float = DEFAULT_SIGMA_RATIO

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise InvalidArgument(
                f"patch dimensions must be positive: {self.width_px}x{self.height_px}"
            )
        if not 0 < self.sigma_ratio <= 1:
            raise InvalidArgument(f"sigma_ratio must be in (0, 1]: {self.sigma_ratio}")

    @property
    def sigma(self):
        return self.sigma_ratio * self.height_px


@dataclasses.dataclass(frozen=True, eq=False)
class AffineMap:
    """``x' = linear @ x + offset``."""

    linear: numpy.ndarray
    offset: numpy.ndarray

    def __post_init__(self):
        linear = numpy.asarray(self.linear, dtype=numpy.float64).reshape(2, 2)
        offset = numpy.asarray(self.offset, dtype=numpy.float64).reshape(2)

        if abs(numpy.linalg.det(linear)) < 1e-12:
            raise InvalidArgument("singular affine map")

        object.__setattr__(self, 'linear', linear)
        object.__setattr__(self, 'offset', offset)

    def apply(self, points):
        points = numpy.asarray(points, dtype=numpy.float64)
        return points @ self.linear.T + self.offset

    def matrix(self):
        """The 2x3 forward matrix, as consumed by ``cv2.warpAffine``."""
        return numpy.hstack([self.linear, self.offset[:, None]])


@dataclasses.dataclass(frozen=True, eq=False)
class HeatMap:
    """A single-channel field at ``scale`` map pixels per source-image
    pixel.

    Producers guarantee values in [0, 1]; only the literal-sum rendering
    mode may exceed 1.

    """
    values: numpy.ndarray
    scale: float = 1.0

    def __post_init__(self):
        values = numpy.asarray(self.values, dtype=numpy.float64)
        if values.ndim != 2:
            raise InvalidArgument(f"heat map must be 2-D, got shape {values.shape}")
        if not self.scale > 0:
            raise InvalidArgument(f"heat map scale must be positive: {self.scale}")

        object.__setattr__(self, 'values', values)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def gaussian_density(my, sigma):
    """The unnormalized cylindrical Gaussian profile at vertical offset
    ``my``: ``exp(-my² / 2σ²) / (2πσ)``.

    """
    return math.exp(-(my ** 2) / (2.0 * sigma ** 2)) / (2.0 * math.pi * sigma)


def gaussian_patch(spec):
    """A ``height_px`` x ``width_px`` cylindrical Gaussian, constant along
    x and peak-normalized across y (centerline value 1.0).

    """
    sigma = spec.sigma
    center = (spec.height_px - 1) / 2.0
    offsets = numpy.arange(spec.height_px, dtype=numpy.float64) - center
    profile = numpy.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    values = numpy.repeat(profile[:, None], spec.width_px, axis=1)
    return HeatMap(values, scale=1.0)


def affine_from_quad(quad, patch_w, patch_h):
    """The affine map taking patch corners (0, 0), (patch_w, 0) and
    (0, patch_h) to quad corners 1, 2 and 4.

    Quad corner 3 is implied; a residual beyond ``AFFINE_RESIDUAL_WARN``
    pixels is logged.

    """
    if patch_w <= 0 or patch_h <= 0:
        raise InvalidArgument(f"patch dimensions must be positive: {patch_w}x{patch_h}")

    (p1, p2, p3, p4) = quad.as_array()

    linear = numpy.column_stack([(p2 - p1) / patch_w, (p4 - p1) / patch_h])
    if abs(numpy.linalg.det(linear)) < 1e-12:
        raise InvalidArgument(f"degenerate quad (collinear corners): {quad.corners!r}")

    transform = AffineMap(linear, p1)

    residual = float(numpy.linalg.norm(transform.apply([patch_w, patch_h]) - p3))
    if residual > AFFINE_RESIDUAL_WARN:
        LOG.warning("affine fit misses corner 3 of %r by %.2f px", quad.corners, residual)

    return transform


def _patch_size(quad):
    (p1, p2, _p3, p4) = quad.as_array()
    width = max(1, int(round(float(numpy.linalg.norm(p2 - p1)))))
    height = max(1, int(round(float(numpy.linalg.norm(p4 - p1)))))
    return (width, height)


def warp_patch(quad, map_w, map_h, sigma_ratio=DEFAULT_SIGMA_RATIO):
    """Warp one quad's Gaussian patch into its region of a
    ``map_h`` x ``map_w`` grid.

    Returns ``(values, (x0, y0))`` -- the warped region and its
    top-left position in the map -- or ``None`` where the quad lies
    wholly outside the map.

    """
    (patch_w, patch_h) = _patch_size(quad)
    patch = gaussian_patch(GaussianPatchSpec(patch_w, patch_h, sigma_ratio))
    transform = affine_from_quad(quad, patch_w, patch_h)

    (bx0, by0, bx1, by1) = quad.bounds()
    x0 = max(0, int(math.floor(bx0)))
    y0 = max(0, int(math.floor(by0)))
    x1 = min(map_w, int(math.ceil(bx1)) + 1)
    y1 = min(map_h, int(math.ceil(by1)) + 1)
    if x1 <= x0 or y1 <= y0:
        return None

    # region-relative; integer shifts keep translated renders identical
    matrix = transform.matrix()
    matrix[:, 2] -= (x0, y0)

    region = cv2.warpAffine(
        patch.values.astype(numpy.float32),
        matrix,
        (x1 - x0, y1 - y0),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0.0,
    )
    return (region.astype(numpy.float64), (x0, y0))


COMPOSE_MODES = ('max', 'sum')


@dataclasses.dataclass(frozen=True)
class MapConfig:
    """Target map rendering: one map pixel per ``stride`` image pixels."""

    stride: int = 4
    sigma_ratio: float = DEFAULT_SIGMA_RATIO
    compose: str = 'max'

    def __post_init__(self):
        if self.stride < 1:
            raise InvalidArgument(f"stride must be >= 1: {self.stride}")
        if not 0 < self.sigma_ratio <= 1:
            raise InvalidArgument(f"sigma_ratio must be in (0, 1]: {self.sigma_ratio}")
        if self.compose not in COMPOSE_MODES:
            raise InvalidArgument(f"compose must be one of {COMPOSE_MODES}: {self.compose!r}")

    @property
    def scale(self):
        return 1.0 / self.stride


def render_map(image_w, image_h, quads, scale=1.0, sigma_ratio=DEFAULT_SIGMA_RATIO,
               compose='max'):
    """Render the text localization map of an ``image_w`` x ``image_h``
    image with words at ``quads``, at ``scale`` map pixels per image
    pixel.

    Overlapping patches are composed by per-pixel maximum, keeping the
    map in [0, 1]; ``compose='sum'`` adds them instead.

    """
    if image_w < 1 or image_h < 1:
        raise InvalidArgument(f"image dimensions must be positive: {image_w}x{image_h}")
    if not 0 < scale <= 1:
        raise InvalidArgument(f"map scale must be in (0, 1]: {scale}")
    if compose not in COMPOSE_MODES:
        raise InvalidArgument(f"compose must be one of {COMPOSE_MODES}: {compose!r}")

    map_w = max(1, int(round(image_w * scale)))
    map_h = max(1, int(round(image_h * scale)))
    values = numpy.zeros((map_h, map_w), dtype=numpy.float64)

    for quad in quads:
        warped = warp_patch(quad.scaled(scale), map_w, map_h, sigma_ratio)
        if warped is None:
            continue

        (region, (x0, y0)) = warped
        (height, width) = region.shape
        target = values[y0:(y0 + height), x0:(x0 + width)]

        if compose == 'max':
            numpy.maximum(target, region, out=target)
        else:
            target += region

    if compose == 'max':
        numpy.clip(values, 0.0, 1.0, out=values)

    return HeatMap(values, scale=scale)
