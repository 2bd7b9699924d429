import numpy
import pytest
import torch

from textmap.baseio import InvalidArgument, WeightsLoadError
from textmap.network import (
    FeatureNetConfig,
    GeneratorConfig,
    build_discriminator,
    build_feature_net,
    build_generator,
    save_networks,
    split_prefixed,
)
from textmap import baseio

from . import TINY_DISCRIMINATOR, TINY_GENERATOR


class TestGenerator:

    @pytest.fixture(scope='class')
    def generator(self):
        return build_generator(seed=0)

    def test_parameter_count(self, generator):
        count = generator.count_parameters()

        assert count.total == 1_452_611
        assert count.trainable == 1_448_387
        assert count.non_trainable == 4_224

    def test_head_count(self, generator):
        head = generator.module.head
        assert head.weight.numel() + head.bias.numel() == 15_616

    def test_output_shape(self, generator):
        assert generator.output_shape((1, 3, 128, 128)) == (1, 3, 32, 32)

    def test_untileable_input(self, generator):
        with pytest.raises(InvalidArgument):
            generator.output_shape((1, 3, 130, 130))

    def test_output_range(self):
        generator = build_generator(TINY_GENERATOR, seed=3)
        output = generator(torch.rand(2, 3, 32, 48) * 10)

        assert output.shape == (2, 3, 8, 12)
        assert output.min() >= -1
        assert output.max() <= 1

    def test_seeded(self):
        first = build_generator(TINY_GENERATOR, seed=5)
        second = build_generator(TINY_GENERATOR, seed=5)
        other = build_generator(TINY_GENERATOR, seed=6)

        assert first.parameter_checksum() == second.parameter_checksum()
        assert first.parameter_checksum() != other.parameter_checksum()

    def test_invalid_config(self):
        with pytest.raises(InvalidArgument):
            GeneratorConfig(head_kernel=8)

        with pytest.raises(InvalidArgument):
            GeneratorConfig(feature_stride=0)

    def test_gradient(self):
        generator = build_generator(TINY_GENERATOR, seed=1, dtype=torch.float64)
        module = generator.module
        module.eval()

        rng = numpy.random.default_rng(0)
        inputs = torch.from_numpy(rng.random((1, 3, 16, 16)))
        weights = torch.from_numpy(rng.standard_normal((1, 3, 4, 4)))

        def loss():
            return (module(inputs) * weights).sum()

        module.zero_grad()
        loss().backward()

        params = [param for param in module.parameters() if param.requires_grad]
        sizes = numpy.array([param.numel() for param in params])
        picks = rng.choice(sizes.sum(), size=100, replace=False)
        offsets = numpy.concatenate([[0], numpy.cumsum(sizes)])

        epsilon = 1e-6
        failures = kinks = 0
        with torch.no_grad():
            center = float(loss())
            for pick in picks:
                index = int(numpy.searchsorted(offsets, pick, side='right') - 1)
                (param, position) = (params[index], int(pick - offsets[index]))
                flat = param.view(-1)
                analytic = float(param.grad.view(-1)[position])

                original = float(flat[position])
                flat[position] = original + epsilon
                plus = float(loss())
                flat[position] = original - epsilon
                minus = float(loss())
                flat[position] = original

                # one-sided slopes disagree where the step crosses a ReLU kink;
                # no derivative exists to check there
                (forward, backward) = ((plus - center) / epsilon, (center - minus) / epsilon)
                if abs(forward - backward) > max(1e-2 * max(abs(forward), abs(backward)), 1e-5):
                    kinks += 1
                    continue

                numeric = (plus - minus) / (2 * epsilon)
                error = abs(analytic - numeric)
                if error > 1e-7 and error > 1e-3 * max(abs(analytic), abs(numeric)):
                    failures += 1

        assert failures == 0
        assert kinks <= 2

    def test_translation_covariant(self):
        generator = build_generator(TINY_GENERATOR, seed=2, dtype=torch.float64)

        inputs = torch.from_numpy(numpy.random.default_rng(4).random((1, 3, 64, 128)))
        shifted = torch.roll(inputs, shifts=4, dims=-1)

        output = generator(inputs)
        output_shifted = generator(shifted)

        numpy.testing.assert_allclose(
            output_shifted[..., 8:24].numpy(),
            output[..., 7:23].numpy(),
            atol=1e-4,
        )


class TestDiscriminator:

    def test_parameter_count(self):
        discriminator = build_discriminator(seed=0)

        assert discriminator.count_parameters().total == 5_219_137

        first = discriminator.module.features[0]
        assert first.weight.numel() + first.bias.numel() == 1_792

    @pytest.mark.parametrize('size, expected', [(64, 4), (32, 2), (16, 1)])
    def test_output_shape(self, size, expected):
        discriminator = build_discriminator(TINY_DISCRIMINATOR)
        assert discriminator.output_shape((2, 3, size, size)) == (2, 1, expected, expected)

    def test_too_small(self):
        discriminator = build_discriminator(TINY_DISCRIMINATOR)

        with pytest.raises(InvalidArgument):
            discriminator.output_shape((1, 3, 15, 15))

    def test_scores(self):
        discriminator = build_discriminator(TINY_DISCRIMINATOR)
        scores = discriminator(torch.rand(3, 3, 32, 32) * 2 - 1)

        assert scores.min() > 0
        assert scores.max() < 1


class TestFeatureNet:

    @pytest.fixture(scope='class')
    def feature_net(self):
        return build_feature_net(FeatureNetConfig(fallback=True, seed=7))

    def test_parameter_count(self, feature_net):
        count = feature_net.count_parameters()

        assert count.total == 1_735_488
        assert count.trainable == 0

    def test_output_shape(self, feature_net):
        assert feature_net.output_shape((1, 3, 64, 64)) == (1, 256, 16, 16)

    def test_fallback_deterministic(self, feature_net):
        again = build_feature_net(FeatureNetConfig(fallback=True, seed=7))
        inputs = torch.rand(1, 3, 16, 16) * 255

        assert again.parameter_checksum() == feature_net.parameter_checksum()
        assert torch.equal(again(inputs), feature_net(inputs))

    def test_no_weights(self):
        with pytest.raises(WeightsLoadError):
            build_feature_net(FeatureNetConfig())

    def test_missing_weights(self, tmp_path):
        with pytest.raises(WeightsLoadError):
            build_feature_net(FeatureNetConfig(weights=str(tmp_path / 'vgg19.pth')))

    def test_missing_weights_fallback(self, tmp_path, caplog):
        config = FeatureNetConfig(weights=str(tmp_path / 'vgg19.pth'), fallback=True)
        build_feature_net(config)

        assert 'falling back' in caplog.text

    def test_weights_file(self, tmp_path, feature_net):
        path = tmp_path / 'vgg19.pth'
        state = {f'features.{name}': value for (name, value) in feature_net.module.features.state_dict().items()}
        torch.save(state, path)

        loaded = build_feature_net(FeatureNetConfig(weights=str(path), seed=99))

        assert loaded.parameter_checksum() == feature_net.parameter_checksum()

    def test_bad_input_mode(self):
        with pytest.raises(InvalidArgument):
            FeatureNetConfig(input_mode='keras')


class TestCheckpointArrays:

    def test_save_load(self, tmp_path):
        generator = build_generator(TINY_GENERATOR, seed=1)
        path = tmp_path / 'weights.npz'
        save_networks(path, {'generator': generator}, {'kind': 'test'})

        (arrays, manifest) = baseio.read_archive(path)
        restored = build_generator(TINY_GENERATOR, seed=2)
        restored.load_state_arrays(split_prefixed(arrays, 'generator'))

        assert manifest['kind'] == 'test'
        assert restored.parameter_checksum() == generator.parameter_checksum()

    def test_mismatched(self):
        generator = build_generator(TINY_GENERATOR)
        other = build_generator(GeneratorConfig(base_channels=4, num_res_blocks=1, expand_channels=8))

        with pytest.raises(WeightsLoadError):
            generator.load_state_arrays(other.state_arrays())
