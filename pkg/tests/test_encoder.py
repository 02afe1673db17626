import numpy as np
import pytest

from kuzureader.autodiff import DimensionError, Tensor, backward, no_grad, sum_all, zero_grads
from kuzureader.encoder import DenseEncoder, EncoderConfig, dense_block, transition


def channel_oracle(initial, growth, depth, blocks, compression):
    """Independent recursion: block adds depth*growth, transition compresses."""
    channels = initial
    for b in range(blocks):
        channels = channels + depth * growth
        if b < blocks - 1:
            channels = int(np.floor(channels * compression))
    return channels


class TestConfig:
    @pytest.mark.parametrize("growth,depth,expected", [
        (16, 16, 460),
        (24, 16, 684),
        (16, 8, 236),
        (24, 8, 348),
    ])
    def test_output_channels_match_oracle(self, growth, depth, expected):
        config = EncoderConfig(growth_rate=growth, block_depth=depth)
        assert channel_oracle(48, growth, depth, 3, 0.5) == expected
        assert config.output_channels == expected

    def test_channel_plan_chain(self):
        config = EncoderConfig(growth_rate=16, block_depth=16)
        assert config.channel_plan() == [48, 304, 152, 408, 204, 460]

    def test_default_downsample_factor(self):
        assert EncoderConfig(growth_rate=8, block_depth=4).downsample_factor == 8

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            EncoderConfig(growth_rate=0, block_depth=4)
        with pytest.raises(ValueError):
            EncoderConfig(growth_rate=8, block_depth=-1)
        with pytest.raises(ValueError):
            EncoderConfig(growth_rate=8, block_depth=4, compression=0.0)
        with pytest.raises(ValueError):
            EncoderConfig(growth_rate=8, block_depth=4, num_blocks=0)


class TestDenseBlock:
    def test_empty_block_is_identity(self):
        x = Tensor(np.random.default_rng(0).normal(size=(4, 5, 3)))
        out = dense_block(x, [])
        assert np.array_equal(out.data, x.data)

    def test_channel_growth(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=16, block_depth=16), seed=1)
        x = Tensor(np.random.default_rng(1).normal(size=(3, 4, 48)))
        with no_grad():
            out = dense_block(x, enc._block_layers(0))
        assert out.shape == (3, 4, 48 + 16 * 16)

    def test_spatial_extents_preserved(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=2), seed=2)
        for h, w in [(1, 1), (2, 7), (5, 3)]:
            x = Tensor(np.random.default_rng(2).normal(size=(h, w, 48)))
            with no_grad():
                out = dense_block(x, enc._block_layers(0))
            assert out.shape[:2] == (h, w)


class TestTransition:
    def test_channel_compression(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=16, block_depth=16), seed=3)
        x = Tensor(np.random.default_rng(3).normal(size=(4, 4, 304)))
        with no_grad():
            out = transition(x, enc.params["trans0.kernel"], enc.params["trans0.bias"])
        assert out.shape == (2, 2, 152)

    def test_spatial_halving(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=1), seed=4)
        x = Tensor(np.random.default_rng(4).normal(size=(8, 8, 52)))
        with no_grad():
            out = transition(x, enc.params["trans0.kernel"], enc.params["trans0.bias"])
        assert out.shape[:2] == (4, 4)

    def test_constant_input_identity_kernel(self):
        kernel = Tensor(np.array([1.0, 0.0]).reshape(1, 1, 2, 1))
        bias = Tensor(np.zeros(1))
        x = Tensor(np.full((4, 4, 2), 0.75))
        out = transition(x, kernel, bias)
        assert np.allclose(out.data, 0.75)

    def test_too_small_input(self):
        kernel = Tensor(np.ones((1, 1, 2, 1)))
        with pytest.raises(DimensionError):
            transition(Tensor(np.ones((1, 4, 2))), kernel, Tensor(np.zeros(1)))


class TestEncode:
    def test_shape_and_channels_small_config(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=16, block_depth=8), seed=5)
        image = np.random.default_rng(5).uniform(size=(64, 192, 1))
        with no_grad():
            grid = enc.encode(image)
        assert grid.features.shape == (8, 24, 236)
        assert grid.downsample_factor == 8

    def test_full_config_channel_count(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=16, block_depth=16), seed=6)
        image = np.random.default_rng(6).uniform(size=(16, 24, 1))
        with no_grad():
            grid = enc.encode(image)
        assert grid.features.shape == (2, 3, 460)

    def test_indivisible_extents_rejected(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=1), seed=7)
        with pytest.raises(DimensionError, match="divisible"):
            enc.encode(np.zeros((20, 16, 1)))

    def test_deterministic_given_seed_and_input(self):
        image = np.random.default_rng(8).uniform(size=(16, 16, 1))
        with no_grad():
            a = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=2), seed=9).encode(image)
            b = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=2), seed=9).encode(image)
        assert np.array_equal(a.features.data, b.features.data)

    def test_every_parameter_gets_gradient(self):
        enc = DenseEncoder(EncoderConfig(growth_rate=4, block_depth=2), seed=10)
        rng = np.random.default_rng(10)
        zero_grads(enc.params.values())
        loss = None
        for _ in range(2):
            grid = enc.encode(rng.uniform(size=(16, 16, 1)))
            term = sum_all(grid.features * rng.normal(size=grid.features.shape))
            loss = term if loss is None else loss + term
        backward(loss)
        for name, p in enc.params.items():
            assert p.grad is not None, f"{name} has no gradient"
            assert np.any(p.grad != 0), f"{name} gradient is all zero"
