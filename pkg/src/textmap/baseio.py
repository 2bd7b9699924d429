"""
baseio
------

Low-level primitives: the exception hierarchy, and reading & writing
of the files every other module trades in (images, 8-bit map PNGs,
parameter archives), with atomic replacement of their targets.

"""
import contextlib
import json
import os
import pathlib
import tempfile
import zipfile

import numpy
from PIL import Image


class TextmapError(Exception):
    """Base of all errors raised by textmap.

    Subclasses may declare ``_default_message_``, which is used when the
    exception is raised without arguments.

    """
    _default_message_ = None

    def __init__(self, *args):
        if not args and self._default_message_:
            args = (self._default_message_,)

        super().__init__(*args)


class InvalidArgument(TextmapError, ValueError):
    """An argument violates the documented precondition of an operation."""

    _default_message_ = "invalid argument"


class ConfigError(TextmapError, ValueError):
    """Run configuration is malformed, or contains unknown keys."""

    _default_message_ = "invalid configuration"


class DataError(TextmapError, OSError):
    """Input data could not be read or decoded."""

    _default_message_ = "unreadable data"


class AnnotationParseError(DataError):
    """Annotation text could not be parsed.

    ``line_number`` is 1-based.

    """
    def __init__(self, message, line_number=None, path=None):
        self.line_number = line_number
        self.path = path

        location = ''
        if path is not None:
            location += f'{path}:'
        if line_number is not None:
            location += f'{line_number}:'

        super().__init__(f'{location} {message}' if location else message)


class WeightsLoadError(DataError):
    """Network weights file missing or corrupt."""

    _default_message_ = "could not load network weights"


class NumericalAbort(TextmapError, ArithmeticError):
    """Training produced a non-finite loss.

    ``snapshot`` records the losses and step at the time of failure.

    """
    _default_message_ = "non-finite loss"

    def __init__(self, *args, snapshot=None):
        super().__init__(*args)
        self.snapshot = snapshot or {}


class PipeClosed(TextmapError, ValueError):
    """Exception indicating an attempted operation on a closed batch
    pipe.

    """
    _default_message_ = "operation on closed pipe"


# atomic writes #

@contextlib.contextmanager
def atomic_path(path):
    """Provide a temporary path beside ``path``, which replaces
    ``path`` only once the managed block completes without error.

    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    (fd, tmp_name) = tempfile.mkstemp(prefix=f'.{path.name}.', suffix='.tmp', dir=path.parent)
    os.close(fd)
    tmp_path = pathlib.Path(tmp_name)

    try:
        yield tmp_path
        os.replace(tmp_path, path)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()


def write_text(path, text):
    with atomic_path(path) as tmp_path:
        tmp_path.write_text(text, encoding='utf-8', newline='')


def write_json(path, data):
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + '\n')


def read_json(path):
    path = pathlib.Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# images #

IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg')


def read_image(path):
    """Read an image file as an 8-bit RGB array of shape (H, W, 3)."""
    path = pathlib.Path(path)
    try:
        with Image.open(path) as image:
            return numpy.asarray(image.convert('RGB'), dtype=numpy.uint8).copy()
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_image(path, samples):
    """Write an 8-bit array (H, W) or (H, W, 3) losslessly as PNG."""
    samples = numpy.asarray(samples)
    if samples.dtype != numpy.uint8:
        raise InvalidArgument(f"expected uint8 samples, got {samples.dtype}")

    if samples.ndim == 3 and samples.shape[2] == 1:
        samples = samples[:, :, 0]

    with atomic_path(path) as tmp_path:
        Image.fromarray(samples).save(tmp_path, format='PNG')


def quantize_map(values):
    """8-bit quantization of a [0, 1] field: ``round(255 * v)``."""
    return numpy.rint(numpy.clip(values, 0.0, 1.0) * 255.0).astype(numpy.uint8)


def dequantize_map(samples):
    return numpy.asarray(samples, dtype=numpy.float64) / 255.0


def write_map_png(path, values):
    write_image(path, quantize_map(values))


def read_map_png(path):
    path = pathlib.Path(path)
    try:
        with Image.open(path) as image:
            samples = numpy.asarray(image.convert('L'), dtype=numpy.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc

    return dequantize_map(samples)


# parameter archives #

MANIFEST_KEY = '__manifest__'


def write_archive(path, arrays, manifest):
    """Write named arrays and a JSON-encodable ``manifest`` to a single
    ``.npz`` archive, atomically.

    """
    encoded = json.dumps(manifest, sort_keys=True).encode('utf-8')
    payload = dict(arrays)
    payload[MANIFEST_KEY] = numpy.frombuffer(encoded, dtype=numpy.uint8)

    with atomic_path(path) as tmp_path:
        with tmp_path.open('wb') as fd:
            numpy.savez(fd, **payload)


def read_archive(path):
    """Read an archive written by ``write_archive``.

    Returns ``(arrays, manifest)``.

    """
    path = pathlib.Path(path)
    try:
        with numpy.load(path, allow_pickle=False) as archive:
            arrays = {key: archive[key] for key in archive.files}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile) as exc:
        raise DataError(f"{path}: {exc}") from exc

    try:
        encoded = arrays.pop(MANIFEST_KEY)
    except KeyError:
        raise DataError(f"{path}: archive has no manifest")

    return (arrays, json.loads(encoded.tobytes().decode('utf-8')))
