import numpy

from textmap.geometry import QuadBox
from textmap.network import DiscriminatorConfig, GeneratorConfig


# small networks for fast training runs
TINY_GENERATOR = GeneratorConfig(base_channels=8, num_res_blocks=2, expand_channels=16)

TINY_DISCRIMINATOR = DiscriminatorConfig(channels=(8, 8, 16, 16, 32, 32, 64, 64), dense_units=32)


def rect(x0, y0, x1, y1):
    return QuadBox.from_rect(x0, y0, x1, y1)


def random_rects(rng, count, extent=100, min_size=10, max_size=40):
    rects = []
    for _index in range(count):
        (w, h) = rng.integers(min_size, max_size, size=2)
        (x, y) = rng.integers(0, extent - max_size, size=2)
        rects.append((float(x), float(y), float(x + w), float(y + h)))
    return rects


def jittered(rng, box, fraction=0.3):
    (x0, y0, x1, y1) = box
    (w, h) = (x1 - x0, y1 - y0)
    (dx, dy) = rng.uniform(-fraction, fraction, size=2) * (w, h)
    return (x0 + dx, y0 + dy, x1 + dx, y1 + dy)


def blank_page(height, width, value=255):
    return numpy.full((height, width, 3), value, dtype=numpy.uint8)
