import numpy
import pytest
import torch

from textmap import pipeline
from textmap.baseio import InvalidArgument
from textmap.imaging import PostprocessParams, PreprocessConfig, RasterImage, localize_from_map
from textmap.network import build_generator
from textmap.training import TrainState

from . import TINY_DISCRIMINATOR, TINY_GENERATOR, blank_page


@pytest.fixture(name='generator')
def tiny_generator():
    return build_generator(TINY_GENERATOR)


class TestPredictMap:

    @pytest.mark.parametrize('shape', [(90, 70), (64, 64), (101, 203)])
    def test_source_dims(self, generator, shape):
        samples = blank_page(*shape)
        samples[20:30, 10:50] = 0

        heat_map = pipeline.predict_map(generator, RasterImage(samples), PreprocessConfig(short_axis_target=64))

        assert heat_map.values.shape == shape
        assert heat_map.scale == 1.0
        assert heat_map.values.min() >= 0.0
        assert heat_map.values.max() <= 1.0

    def test_deterministic(self, generator):
        img = RasterImage(numpy.random.default_rng(0).integers(0, 256, (64, 80, 3), dtype=numpy.uint8))
        config = PreprocessConfig(short_axis_target=64)

        numpy.testing.assert_array_equal(
            pipeline.predict_map(generator, img, config).values,
            pipeline.predict_map(generator, img, config).values,
        )


class TestDetectBoxes:

    def test_localizes_predicted_map(self, generator):
        samples = blank_page(80, 96)
        samples[20:32, 16:60] = 0
        img = RasterImage(samples)
        config = PreprocessConfig(short_axis_target=64)

        boxes = pipeline.detect_boxes(generator, img, config, PostprocessParams())
        expected = localize_from_map(pipeline.predict_map(generator, img, config), PostprocessParams())

        assert [box.bounds() for box in boxes] == [box.bounds() for box in expected]


class TestLoadGenerator:

    def test_checkpoint(self, tmp_path):
        state = TrainState.initial(TINY_GENERATOR, TINY_DISCRIMINATOR)
        state.save(tmp_path / 'checkpoint.npz')

        generator = pipeline.load_generator(tmp_path / 'checkpoint.npz')

        assert generator.config == TINY_GENERATOR
        for (name, tensor) in state.generator.module.state_dict().items():
            assert torch.equal(generator.module.state_dict()[name], tensor)


class TestFitSamples:

    def test_no_samples(self):
        with pytest.raises(InvalidArgument):
            pipeline.fit_samples([], None)
