"""
dataset
-------

Document corpora: annotation files, corpus directory layouts, the
materialization of (image, map) training pairs, and synthetic documents.

Annotation files hold one word per line::

    x1,y1,x2,y2,x3,y3,x4,y4,transcript

of which the transcript may itself contain commas.

A corpus directory holds either ``images/`` and ``annotations/``
(annotation files named by image stem) beside a ``manifest.json`` of
splits, or, as distributed for scanned-receipt benchmarks, image and
annotation files side by side.

"""
import dataclasses
import hashlib
import json
import logging
import math
import pathlib

import cv2
import numpy

from . import baseio
from .baseio import AnnotationParseError, DataError, InvalidArgument
from .geometry import HeatMap, MapConfig, QuadBox, render_map
from .imaging import PreprocessConfig, RasterImage, pad_to_multiple


LOG = logging.getLogger(__name__)

SPLITS = ('train', 'test')

MANIFEST_NAME = 'manifest.json'

CACHE_VERSION = 1


# annotations #

@dataclasses.dataclass(frozen=True)
class AnnotationRecord:

    quad: QuadBox
    transcript: str = ''


def _parse_coordinate(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite coordinate: {text!r}")
    return value


def parse_annotation(content, path=None):
    """Parse annotation text (or bytes) into ``AnnotationRecord``.

    Blank lines are skipped; quads are reordered clockwise from their
    top-left corner.

    """
    if isinstance(content, bytes):
        try:
            content = content.decode('utf-8-sig')
        except UnicodeDecodeError as exc:
            raise AnnotationParseError(f"not UTF-8 text: {exc}", path=path) from exc

    records = []
    for (line_number, line) in enumerate(content.splitlines(), 1):
        line = line.rstrip('\r')
        if not line.strip():
            continue

        fields = line.split(',', 8)
        if len(fields) < 8:
            raise AnnotationParseError(
                f"expected 8 coordinates, found {len(fields)} fields",
                line_number,
                path,
            )

        try:
            coordinates = [_parse_coordinate(field) for field in fields[:8]]
        except ValueError as exc:
            raise AnnotationParseError(f"bad coordinate: {exc}", line_number, path) from exc

        try:
            quad = QuadBox.from_flat(coordinates).ordered()
        except InvalidArgument as exc:
            raise AnnotationParseError(str(exc), line_number, path) from exc

        transcript = fields[8] if len(fields) > 8 else ''
        records.append(AnnotationRecord(quad, transcript))

    return records


def _format_coordinate(value):
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def serialize_annotation(records):
    """Annotation text of ``records``, the inverse of
    ``parse_annotation``.

    """
    lines = (
        ','.join([_format_coordinate(value) for value in record.quad.flat()] + [record.transcript])
        for record in records
    )
    return ''.join(f'{line}\n' for line in lines)


def read_annotation_file(path):
    path = pathlib.Path(path)
    try:
        content = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc

    return parse_annotation(content, path=path)


# corpora #

@dataclasses.dataclass(frozen=True)
class DocumentSample:
    """A corpus document: its image file, its annotations and its split."""

    key: str
    image_path: pathlib.Path
    annotations: tuple = ()
    split: str = 'train'

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InvalidArgument(f"split must be one of {SPLITS}: {self.split!r}")
        object.__setattr__(self, 'image_path', pathlib.Path(self.image_path))
        object.__setattr__(self, 'annotations', tuple(self.annotations))

    @property
    def quads(self):
        return [record.quad for record in self.annotations]

    def read_image(self):
        return RasterImage(baseio.read_image(self.image_path))


def _image_files(directory):
    return sorted(
        path for path in directory.iterdir()
        if path.is_file() and path.suffix.lower() in baseio.IMAGE_SUFFIXES
    )


def _load_manifest_layout(root, split):
    manifest = baseio.read_json(root / MANIFEST_NAME)
    unknown = set(manifest) - set(SPLITS)
    if unknown:
        raise DataError(f"{root / MANIFEST_NAME}: unknown splits {sorted(unknown)}")

    images = {path.stem: path for path in _image_files(root / 'images')}

    samples = []
    for split_name in SPLITS:
        if split is not None and split_name != split:
            continue

        for key in manifest.get(split_name, ()):
            try:
                image_path = images[key]
            except KeyError:
                raise DataError(f"{root / MANIFEST_NAME}: no image for {key!r} in {root / 'images'}")

            annotation_path = root / 'annotations' / f'{key}.txt'
            records = read_annotation_file(annotation_path) if annotation_path.exists() else []
            samples.append(DocumentSample(key, image_path, records, split_name))

    return samples


def _load_flat_layout(root, split):
    samples = []
    for image_path in _image_files(root):
        annotation_path = image_path.with_suffix('.txt')
        if not annotation_path.exists():
            LOG.warning("%s: no annotation file; skipped", image_path)
            continue

        records = read_annotation_file(annotation_path)
        samples.append(DocumentSample(image_path.stem, image_path, records, split or 'train'))

    return samples


def load_corpus(root, split=None):
    """Load the ``DocumentSample`` of the corpus at ``root``, in key
    order.

    The layout is detected by the presence of ``manifest.json``; in the
    side-by-side layout, every document is assigned ``split`` (or
    ``'train'``). With a manifest, ``split`` selects documents.

    """
    root = pathlib.Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")

    if (root / MANIFEST_NAME).exists():
        samples = _load_manifest_layout(root, split)
    else:
        samples = _load_flat_layout(root, split)

    return sorted(samples, key=lambda sample: sample.key)


@dataclasses.dataclass(frozen=True, eq=False)
class CorpusEntry:

    key: str
    image: RasterImage
    annotations: tuple
    split: str = 'train'


def write_corpus(root, entries):
    """Write ``CorpusEntry`` to ``root`` in the manifest layout.

    Returns the written ``DocumentSample``.

    """
    root = pathlib.Path(root)
    splits = {name: [] for name in SPLITS}
    samples = []

    for entry in entries:
        image_path = root / 'images' / f'{entry.key}.png'
        baseio.write_image(image_path, entry.image.as_uint8())
        baseio.write_text(root / 'annotations' / f'{entry.key}.txt',
                          serialize_annotation(entry.annotations))

        splits[entry.split].append(entry.key)
        samples.append(DocumentSample(entry.key, image_path, entry.annotations, entry.split))

    baseio.write_json(root / MANIFEST_NAME, splits)
    return samples


# training pairs #

@dataclasses.dataclass(frozen=True, eq=False)
class TrainingPair:
    """A preprocessed image (dimensions divisible by the map stride) and
    its target map, with the resize factors of preprocessing.

    """
    key: str
    image: RasterImage
    heat_map: HeatMap
    scale_x: float
    scale_y: float


def clip_quad(quad, width, height):
    """``quad`` with corners clipped to the image, or ``None`` where
    nothing of it remains.

    """
    points = quad.as_array()
    clipped = numpy.clip(points, (0.0, 0.0), (float(width), float(height)))
    if numpy.array_equal(clipped, points):
        return quad

    try:
        return QuadBox(tuple(map(tuple, clipped.tolist())))
    except InvalidArgument:
        return None


def preprocessed_quads(quads, scale_x, scale_y, width, height, key=''):
    """Quads in preprocessed-image pixels, clipped to the source image
    of ``width`` x ``height``.

    """
    scaled = []
    for quad in quads:
        clipped = clip_quad(quad, width, height)
        if clipped is not quad:
            LOG.warning("%s: annotation %s exceeds image bounds; clipped", key, quad.flat())
        if clipped is not None:
            scaled.append(clipped.scaled(scale_x, scale_y))

    return scaled


def _cache_key(sample, preprocess_cfg, map_cfg):
    digest = hashlib.sha256()
    try:
        digest.update(sample.image_path.read_bytes())
    except OSError as exc:
        raise DataError(f"{sample.image_path}: {exc}") from exc

    digest.update(serialize_annotation(sample.annotations).encode('utf-8'))
    digest.update(json.dumps({
        'version': CACHE_VERSION,
        'preprocess': dataclasses.asdict(preprocess_cfg),
        'map': dataclasses.asdict(map_cfg),
    }, sort_keys=True).encode('utf-8'))
    return digest.hexdigest()


def _cache_paths(cache_dir, cache_key):
    base = pathlib.Path(cache_dir) / cache_key[:2] / cache_key
    return (base.with_suffix('.image.png'), base.with_suffix('.map.png'), base.with_suffix('.json'))


def _read_cached(sample, cache_dir, cache_key, map_cfg):
    (image_path, map_path, meta_path) = _cache_paths(cache_dir, cache_key)
    if not meta_path.exists():
        return None

    try:
        meta = baseio.read_json(meta_path)
        image = RasterImage(baseio.read_image(image_path))
        values = baseio.read_map_png(map_path)
    except DataError as exc:
        LOG.warning("%s: unreadable cache entry (%s); rebuilding", sample.key, exc)
        return None

    LOG.debug("%s: cache hit %s", sample.key, cache_key)
    return TrainingPair(sample.key, image, HeatMap(values, map_cfg.scale),
                        meta['scale_x'], meta['scale_y'])


def _write_cached(pair, cache_dir, cache_key):
    (image_path, map_path, meta_path) = _cache_paths(cache_dir, cache_key)
    baseio.write_image(image_path, pair.image.as_uint8())
    baseio.write_map_png(map_path, pair.heat_map.values)
    # sidecar last: its presence marks the entry complete
    baseio.write_json(meta_path, {'scale_x': pair.scale_x, 'scale_y': pair.scale_y})


def build_training_pair(sample, preprocess_cfg=PreprocessConfig(), map_cfg=MapConfig()):
    """Preprocess ``sample``'s image and render its target map.

    The map is quantized to 8 bits, as stored in the cache.

    """
    source = sample.read_image()
    result = preprocess_cfg.apply(source)
    image = pad_to_multiple(result.image, map_cfg.stride)

    quads = preprocessed_quads(sample.quads, result.scale_x, result.scale_y,
                               source.width, source.height, sample.key)
    heat_map = render_map(image.width, image.height, quads,
                          scale=map_cfg.scale,
                          sigma_ratio=map_cfg.sigma_ratio,
                          compose=map_cfg.compose)

    values = baseio.dequantize_map(baseio.quantize_map(heat_map.values))
    return TrainingPair(sample.key, image, HeatMap(values, map_cfg.scale),
                        result.scale_x, result.scale_y)


def build_training_pairs(samples, preprocess_cfg=PreprocessConfig(), map_cfg=MapConfig(),
                         cache_dir=None):
    """Materialize the ``TrainingPair`` of each sample, via the cache at
    ``cache_dir`` (if any).

    Samples whose image cannot be read are skipped.

    """
    pairs = []
    for sample in samples:
        try:
            cache_key = _cache_key(sample, preprocess_cfg, map_cfg) if cache_dir else None

            pair = _read_cached(sample, cache_dir, cache_key, map_cfg) if cache_key else None
            if pair is None:
                pair = build_training_pair(sample, preprocess_cfg, map_cfg)
                if cache_key:
                    _write_cached(pair, cache_dir, cache_key)
        except DataError as exc:
            LOG.warning("%s: skipped (%s)", sample.key, exc)
            continue

        pairs.append(pair)

    return pairs


# synthetic documents #

def _check_range(name, bounds, minimum=0):
    (lo, hi) = bounds
    if not minimum <= lo <= hi:
        raise InvalidArgument(f"{name} must be a range {minimum} <= lo <= hi: {bounds}")


@dataclasses.dataclass(frozen=True)
class SyntheticDocSpec:
    """A page of ``num_lines`` lines of dark glyph-like words on light,
    noisy paper.

    Ranges are inclusive ``(lo, hi)``; ``ink`` is the intensity of
    strokes in [0, 1] (0 is black).

    Each page draws its own style within these ranges: a font height
    which its lines vary by at most ``font_jitter`` px, an ink tone which
    its words vary by at most ``ink_jitter``, and a noise level of
    ``noise_sigma`` times a factor drawn from ``noise_scale``.

    """
    page_width: int = 400
    page_height: int = 560
    num_lines: int = 12
    word_height: tuple = (12, 20)
    word_width: tuple = (24, 72)
    word_gap: tuple = (8, 20)
    line_gap: tuple = (10, 24)
    ink: tuple = (0.05, 0.35)
    paper: float = 0.94
    noise_sigma: float = 0.02
    font_jitter: int = 2
    ink_jitter: float = 0.05
    noise_scale: tuple = (0.5, 1.5)
    margin: int = 24
    seed: int = 0

    def __post_init__(self):
        for name in ('word_height', 'word_width', 'word_gap', 'line_gap', 'ink', 'noise_scale'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

        _check_range('word_height', self.word_height, 2)
        _check_range('word_width', self.word_width, 2)
        _check_range('word_gap', self.word_gap, 1)
        _check_range('line_gap', self.line_gap, 1)
        _check_range('ink', self.ink)
        _check_range('noise_scale', self.noise_scale)

        if self.ink[1] >= self.paper or self.paper > 1:
            raise InvalidArgument(f"ink {self.ink} must be darker than paper {self.paper} <= 1")
        if min(self.num_lines, self.noise_sigma, self.margin, self.font_jitter, self.ink_jitter) < 0:
            raise InvalidArgument("counts, jitters, noise_sigma and margin must be non-negative")
        if self.page_width - 2 * self.margin < self.word_width[1]:
            raise InvalidArgument(f"page width {self.page_width} cannot hold a word")


def _draw_word(canvas, rng, x0, y0, x1, y1, ink):
    height = y1 - y0
    x = x0
    while x < x1:
        thickness = int(rng.integers(1, 3))
        if rng.random() < 0.25 and x + 4 < x1:
            # arc glyph
            width = int(rng.integers(3, 6))
            center = (x + width // 2, y0 + height // 2)
            axes = (max(1, width // 2), max(1, (height - 1) // 2))
            cv2.ellipse(canvas, center, axes, 0, 0, 360, ink, thickness)
            x += width + int(rng.integers(2, 4))
        else:
            # bar glyph: full height, or ascender/descender cut short
            top = y0 + (int(rng.integers(0, height // 3 + 1)) if rng.random() < 0.3 else 0)
            cv2.line(canvas, (x, top), (x, y1 - 1), ink, thickness)
            x += thickness + int(rng.integers(2, 4))


def synth_document(spec=SyntheticDocSpec()):
    """Generate a page per ``spec``: ``(RasterImage, [QuadBox])``.

    Word boxes are laid out in lines, separated by at least one pixel
    from each other; the returned boxes are exact.

    """
    rng = numpy.random.default_rng(spec.seed)
    (width, height) = (spec.page_width, spec.page_height)

    strokes = numpy.ones((height, width), dtype=numpy.float32)
    quads = []

    # page style
    font = int(rng.integers(spec.word_height[0], spec.word_height[1] + 1))
    font_range = (max(spec.word_height[0], font - spec.font_jitter),
                  min(spec.word_height[1], font + spec.font_jitter))
    tone = float(rng.uniform(*spec.ink))
    ink_range = (max(spec.ink[0], tone - spec.ink_jitter), min(spec.ink[1], tone + spec.ink_jitter))
    noise_sigma = spec.noise_sigma * float(rng.uniform(*spec.noise_scale))

    right = width - spec.margin
    y = spec.margin
    for line in range(spec.num_lines):
        word_h = int(rng.integers(font_range[0], font_range[1] + 1))
        if y + word_h > height - spec.margin:
            raise InvalidArgument(
                f"page height {height} cannot hold {spec.num_lines} lines (line {line + 1})"
            )

        x = spec.margin
        while True:
            word_w = int(rng.integers(spec.word_width[0], spec.word_width[1] + 1))
            if x + word_w > right:
                break

            ink = float(rng.uniform(*ink_range))
            box = numpy.ones((word_h, word_w), dtype=numpy.float32)
            _draw_word(box, rng, 0, 0, word_w, word_h, ink)
            region = strokes[y:(y + word_h), x:(x + word_w)]
            numpy.minimum(region, box, out=region)

            quads.append(QuadBox.from_rect(x, y, x + word_w, y + word_h))
            x += word_w + int(rng.integers(spec.word_gap[0], spec.word_gap[1] + 1))

        y += word_h + int(rng.integers(spec.line_gap[0], spec.line_gap[1] + 1))

    paper = spec.paper + rng.normal(0.0, noise_sigma, size=(height, width))
    page = numpy.where(strokes < 1.0, strokes, paper)
    samples = numpy.rint(numpy.clip(page, 0.0, 1.0) * 255.0).astype(numpy.uint8)

    return (RasterImage(numpy.repeat(samples[:, :, None], 3, axis=2)), quads)


def synth_corpus(num_docs, seed=0, spec=SyntheticDocSpec(), test_docs=0):
    """``CorpusEntry`` of ``num_docs`` training and ``test_docs`` test
    documents, each generated from a seed derived from ``seed`` and its
    index.

    """
    if num_docs < 0 or test_docs < 0:
        raise InvalidArgument(f"document counts must be non-negative: {num_docs}, {test_docs}")

    entries = []
    for index in range(num_docs + test_docs):
        doc_seed = int(numpy.random.SeedSequence([seed, index]).generate_state(1)[0])
        (image, quads) = synth_document(dataclasses.replace(spec, seed=doc_seed))

        split = 'train' if index < num_docs else 'test'
        records = tuple(AnnotationRecord(quad) for quad in quads)
        entries.append(CorpusEntry(f'synth-{index:04d}', image, records, split))

    return entries


# few-shot subsets #

def subset_sample(samples, n, seed=0, nested=True):
    """``n`` samples drawn without replacement.

    With ``nested``, these are the first ``n`` of a ``seed``-shuffled
    pool, so that smaller subsets of a seed are contained in larger
    ones. Otherwise, every ``n`` draws independently.

    """
    samples = list(samples)
    if not 1 <= n <= len(samples):
        raise InvalidArgument(f"subset size must be in [1, {len(samples)}]: {n}")

    rng = numpy.random.default_rng(seed if nested else [seed, n])
    order = rng.permutation(len(samples))
    return [samples[index] for index in order[:n]]
