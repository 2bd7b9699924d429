import math

import numpy
import pytest
import scipy.ndimage

from textmap.baseio import InvalidArgument
from textmap.evaluation import iou
from textmap.geometry import HeatMap, render_map
from textmap.imaging import (
    PostprocessParams,
    PreprocessConfig,
    RasterImage,
    bicubic_resize,
    cubic_kernel,
    detect_content_region,
    dilate_mask,
    generate_crop_pairs,
    localize_from_map,
    pad_to_multiple,
    preprocess,
    random_crop_pair,
    window_intensities,
)

from . import blank_page, rect


class TestRasterImage:

    def test_gray_expanded(self):
        img = RasterImage(numpy.zeros((4, 5), dtype=numpy.uint8))
        assert (img.height, img.width, img.channels) == (4, 5, 1)
        assert img.to_rgb().channels == 3

    def test_float_range(self):
        with pytest.raises(InvalidArgument):
            RasterImage(numpy.full((2, 2), 1.5))

    def test_bad_shape(self):
        with pytest.raises(InvalidArgument):
            RasterImage(numpy.zeros((2, 2, 2)))

    def test_uint8_float(self):
        img = RasterImage(numpy.array([[0, 255]], dtype=numpy.uint8))
        numpy.testing.assert_array_equal(img.as_float()[:, :, 0], [[0.0, 1.0]])
        assert RasterImage(img.as_float()).as_uint8().tolist() == img.samples.tolist()


class TestContentRegion:

    def test_rectangle(self):
        samples = blank_page(100, 120)
        samples[10:30, 40:80] = 0

        region = detect_content_region(RasterImage(samples))

        assert (region.x0, region.x1, region.y0, region.y1) == (40, 80, 10, 30)

    def test_blank(self):
        region = detect_content_region(RasterImage(blank_page(50, 70)))
        assert (region.x0, region.x1, region.y0, region.y1) == (0, 70, 0, 50)

    def test_border_frame(self):
        samples = blank_page(50, 70)
        samples[0] = samples[-1] = 0
        samples[:, 0] = samples[:, -1] = 0

        region = detect_content_region(RasterImage(samples))

        assert (region.x0, region.x1, region.y0, region.y1) == (0, 70, 0, 50)

    def test_full_height_band(self):
        # the row profile is flat; the columns still bound the ink
        samples = blank_page(60, 120)
        samples[:, 40:80] = 0

        region = detect_content_region(RasterImage(samples))

        assert (region.x0, region.x1, region.y0, region.y1) == (40, 80, 0, 60)

    def test_full_width_band(self):
        samples = blank_page(60, 120)
        samples[15:25] = 0

        region = detect_content_region(RasterImage(samples))

        assert (region.x0, region.x1, region.y0, region.y1) == (0, 120, 15, 25)


class TestPreprocess:

    def test_window(self):
        (windowed, degenerate) = window_intensities(numpy.array([0.5, 0.9995, 0.25, 1.0, 0.75]))

        assert not degenerate
        assert windowed.tolist() == [0, 255, 0, 255, 128]

    def test_window_degenerate(self):
        (windowed, degenerate) = window_intensities(numpy.full((3, 3), 0.7))

        assert degenerate
        assert not windowed.any()

    def test_scale(self):
        samples = blank_page(1200, 1300)
        samples[50, 50:1250] = samples[1149, 50:1250] = 0
        samples[50:1150, 50] = samples[50:1150, 1249] = 0

        result = preprocess(RasterImage(samples), short_axis_target=550)

        assert (result.scale_x, result.scale_y) == (0.5, 0.5)
        assert (result.image.height, result.image.width) == (600, 650)
        assert result.image.is_uint8
        assert not result.degenerate

    def test_config_apply(self):
        samples = blank_page(40, 60)
        samples[10:30, 10:30] = 0

        result = PreprocessConfig(short_axis_target=10).apply(RasterImage(samples))

        assert (result.image.height, result.image.width) == (20, 30)

    def test_constant(self, caplog):
        result = preprocess(RasterImage(blank_page(40, 40, value=128)), short_axis_target=20)

        assert result.degenerate
        assert not result.image.samples.any()
        assert 'constant' in caplog.text

    def test_monotone(self):
        ramp = numpy.tile(numpy.linspace(0, 1, 64), (32, 1))
        result = preprocess(RasterImage(ramp), short_axis_target=32)

        row = result.image.samples[16, :, 0].astype(int)
        assert numpy.all(numpy.diff(row) >= 0)
        assert row.min() == 0
        assert row.max() == 255

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            PreprocessConfig(short_axis_target=0)

        with pytest.raises(InvalidArgument):
            PreprocessConfig(lo_frac=0.9, hi_frac=0.5)

    def test_pad_to_multiple(self):
        padded = pad_to_multiple(RasterImage(blank_page(10, 13, value=0)), 4)

        assert (padded.height, padded.width) == (12, 16)
        assert padded.samples[11, 15, 0] == 255
        assert padded.samples[9, 12, 0] == 0


def _direct_bicubic(values, target_w, target_h):
    (height, width) = values.shape
    result = numpy.zeros((target_h, target_w))
    for i in range(target_h):
        cy = (i + 0.5) * height / target_h - 0.5
        for j in range(target_w):
            cx = (j + 0.5) * width / target_w - 0.5
            total = 0.0
            for m in range(math.floor(cy) - 1, math.floor(cy) + 3):
                for n in range(math.floor(cx) - 1, math.floor(cx) + 3):
                    weight = float(cubic_kernel(cy - m)) * float(cubic_kernel(cx - n))
                    source = values[min(max(m, 0), height - 1), min(max(n, 0), width - 1)]
                    total += weight * source
            result[i, j] = total
    return numpy.clip(result, 0, 1)


class TestBicubic:

    def test_identity(self):
        values = numpy.random.default_rng(0).random((9, 13))
        resized = bicubic_resize(HeatMap(values), 13, 9)

        numpy.testing.assert_allclose(resized.values, values, atol=1e-6)

    def test_constant(self):
        resized = bicubic_resize(HeatMap(numpy.full((5, 7), 0.7)), 31, 17)

        numpy.testing.assert_allclose(resized.values, 0.7, atol=1e-6)

    def test_kernel(self):
        assert cubic_kernel(0) == 1
        assert cubic_kernel(1) == 0
        assert cubic_kernel(2) == 0
        assert cubic_kernel(0.5) == pytest.approx(0.5625)

    @pytest.mark.parametrize('target', [(20, 12), (5, 3), (8, 16)])
    def test_direct_oracle(self, target):
        values = numpy.random.default_rng(1).random((6, 10))
        resized = bicubic_resize(HeatMap(values), *target)

        numpy.testing.assert_allclose(resized.values, _direct_bicubic(values, *target), atol=1e-6)

    def test_transpose(self):
        values = numpy.random.default_rng(2).random((7, 11))

        resized = bicubic_resize(HeatMap(values), 23, 15)
        transposed = bicubic_resize(HeatMap(values.T), 15, 23)

        numpy.testing.assert_allclose(transposed.values, resized.values.T, atol=1e-9)

    def test_scale(self):
        resized = bicubic_resize(HeatMap(numpy.zeros((10, 10)), scale=0.25), 40, 40)
        assert resized.scale == pytest.approx(1.0)

    def test_invalid_target(self):
        with pytest.raises(InvalidArgument):
            bicubic_resize(HeatMap(numpy.zeros((2, 2))), 0, 4)


def _coordinate_image(height, width):
    """An RGB image whose pixels encode their own coordinates."""
    (y, x) = numpy.mgrid[:height, :width]
    samples = numpy.stack([x % 256, y % 256, x // 256 + 16 * (y // 256)], axis=-1)
    return RasterImage(samples.astype(numpy.uint8))


def _decode_offset(image_crop):
    (r, g, b) = image_crop.samples[0, 0].astype(int)
    return (r + 256 * (b % 16), g + 256 * (b // 16))


class TestCropPairs:

    quads = [rect(12, 20, 92, 44), rect(120, 60, 248, 100), rect(32, 152, 200, 184)]

    @pytest.fixture
    def pair(self):
        img = _coordinate_image(260, 300)
        heat_map = render_map(300, 260, self.quads, scale=0.25)
        return (img, heat_map)

    def test_shapes(self, pair):
        (image_crop, map_crop) = random_crop_pair(*pair, crop=128, rng_seed=5)

        assert (image_crop.height, image_crop.width) == (128, 128)
        assert map_crop.shape == (32, 32)

    def test_deterministic(self, pair):
        (image1, map1) = random_crop_pair(*pair, crop=128, rng_seed=9)
        (image2, map2) = random_crop_pair(*pair, crop=128, rng_seed=9)

        numpy.testing.assert_array_equal(image1.samples, image2.samples)
        numpy.testing.assert_array_equal(map1.values, map2.values)

    def test_aligned(self, pair):
        for (image_crop, map_crop) in generate_crop_pairs(*pair, crop=128, count=20, seed=3):
            (dx, dy) = _decode_offset(image_crop)
            assert dx % 4 == 0 and dy % 4 == 0

            moved = [quad.translated(-dx, -dy) for quad in self.quads]
            expected = render_map(128, 128, moved, scale=0.25)

            numpy.testing.assert_allclose(map_crop.values, expected.values, atol=1e-6)

    def test_small_image_padded(self):
        img = RasterImage(blank_page(40, 60, value=0))
        heat_map = HeatMap(numpy.ones((10, 15)), scale=0.25)

        (image_crop, map_crop) = random_crop_pair(img, heat_map, crop=64)

        assert (image_crop.height, image_crop.width) == (64, 64)
        assert map_crop.shape == (16, 16)
        assert image_crop.samples[63, 63, 0] == 255
        assert map_crop.values[15, 15] == 0
        assert map_crop.values[0, 0] == 1

    def test_crop_not_multiple(self, pair):
        with pytest.raises(InvalidArgument):
            random_crop_pair(*pair, crop=126)

    def test_map_mismatch(self):
        img = RasterImage(blank_page(200, 200))
        with pytest.raises(InvalidArgument):
            random_crop_pair(img, HeatMap(numpy.zeros((10, 10)), scale=0.25), crop=128)


def _count_components(mask):
    return scipy.ndimage.label(mask, structure=numpy.ones((3, 3)))[1]


class TestLocalize:

    def test_empty(self):
        assert localize_from_map(HeatMap(numpy.zeros((40, 40)))) == []

    def test_round_trip(self):
        quad = rect(10, 20, 60, 41)
        heat_map = render_map(100, 80, [quad])

        (found,) = localize_from_map(heat_map)

        assert iou(found, quad) >= 0.8

    @pytest.mark.parametrize('seed', range(5))
    def test_round_trip_grid(self, seed):
        rng = numpy.random.default_rng(seed)
        quads = []
        for row in range(4):
            for column in range(3):
                (w, h) = (int(rng.integers(12, 50)), int(rng.integers(8, 30)))
                (x, y) = (10 + 70 * column, 10 + 45 * row)
                quads.append(rect(x, y, x + w, y + h))

        heat_map = render_map(240, 200, quads)
        found = localize_from_map(heat_map)

        assert len(found) == len(quads)
        for quad in quads:
            assert max(iou(quad, box) for box in found) >= 0.8

    def test_separated(self):
        heat_map = render_map(100, 60, [rect(10, 20, 40, 41), rect(50, 20, 80, 41)])
        assert len(localize_from_map(heat_map)) == 2

    def test_merged(self):
        heat_map = render_map(100, 60, [rect(10, 20, 40, 41), rect(41, 20, 70, 41)])

        (found,) = localize_from_map(heat_map)

        (x0, _y0, x1, _y1) = found.bounds()
        assert (x0, x1) == (10, 70)

    def test_sorted(self):
        quads = [rect(60, 50, 90, 70), rect(10, 50, 40, 70), rect(30, 10, 60, 30)]
        found = localize_from_map(render_map(100, 100, quads))

        assert [box.bounds()[0] for box in found] == [30, 10, 60]

    def test_min_area(self):
        values = numpy.zeros((20, 20))
        values[5, 5] = 1.0

        assert localize_from_map(HeatMap(values)) == []
        assert len(localize_from_map(HeatMap(values), PostprocessParams(min_box_area_px=1))) == 1

    def test_scale_back(self):
        quad = rect(40, 80, 240, 164)
        heat_map = render_map(400, 400, [quad], scale=0.25)

        (found,) = localize_from_map(heat_map, scale_back=(0.5, 0.5))

        (x0, _y0, x1, _y1) = found.bounds()
        assert (x0, x1) == (80, 480)

    def test_no_height_restore(self):
        heat_map = render_map(100, 80, [rect(10, 20, 60, 41)])

        (found,) = localize_from_map(heat_map, PostprocessParams(restore_height=False))

        (_x0, y0, _x1, y1) = found.bounds()
        assert (y0, y1) == (23, 38)

    def test_height_gain(self):
        band = 0.5 * math.sqrt(2 * math.log(2.5))
        assert PostprocessParams().height_gain == pytest.approx(1 / band)
        assert PostprocessParams(restore_height=False).height_gain == 1.0

    @pytest.mark.parametrize('seed', range(4))
    def test_contour_matches_label(self, seed):
        rng = numpy.random.default_rng(seed)
        values = numpy.zeros((60, 80))
        for _index in range(6):
            (x, y) = rng.integers(0, 70, size=2)
            (w, h) = rng.integers(1, 12, size=2)
            values[y:(y + h), x:(x + w)] = 1.0

        # a ring with a blob in its hole
        values[10:40, 10:40] = 1.0
        values[14:36, 14:36] = 0.0
        values[24:27, 24:27] = 1.0

        by_label = localize_from_map(HeatMap(values), PostprocessParams(dilation_iters=0))
        by_contour = localize_from_map(HeatMap(values), PostprocessParams(dilation_iters=0, method='contour'))

        assert {box.corners for box in by_label} == {box.corners for box in by_contour}
        assert len(by_label) == len(by_contour)

    @pytest.mark.parametrize('seed', range(5))
    def test_dilation_extensive(self, seed):
        mask = (numpy.random.default_rng(seed).random((40, 50)) > 0.9).astype(numpy.uint8)

        counts = []
        for iters in range(5):
            dilated = dilate_mask(mask, PostprocessParams(dilation_iters=iters))
            assert dilated.dtype == numpy.uint8
            assert numpy.all(dilated >= mask)
            counts.append(_count_components(dilated))

        assert counts == sorted(counts, reverse=True)

    def test_dilation_closed(self):
        # dots 2 px apart: one pass of the 3x3 box joins them all
        mask = numpy.zeros((30, 30), dtype=numpy.uint8)
        mask[5:25:2, 5:25:2] = 1

        counts = [_count_components(dilate_mask(mask, PostprocessParams(dilation_iters=iters)))
                  for iters in range(5)]

        assert counts == [100, 1, 1, 1, 1]

    @pytest.mark.parametrize('kwargs', [
        {'threshold': 0},
        {'threshold': 1},
        {'dilation_kernel': (2, 3)},
        {'method': 'watershed'},
        {'dilation_iters': -1},
    ])
    def test_invalid_params(self, kwargs):
        with pytest.raises(InvalidArgument):
            PostprocessParams(**kwargs)
