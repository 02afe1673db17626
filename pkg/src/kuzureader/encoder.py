"""Densely connected convolutional feature extractor.

A document image (H x W x 1, values in [0, 1], dark ink mapped high) is
reduced to a coarse feature grid: a stem convolution with max pooling,
then dense blocks joined by compressing transition layers. Inside a dense
block every layer sees the channel-concatenation of all previous outputs;
a 1x1 bottleneck (4x the growth rate) precedes each 3x3 convolution.
Transitions halve the channel count (by default) with a 1x1 convolution
and 2x2 average pooling.

Channel bookkeeping from an initial 48: a block adds depth * growth_rate
channels, a transition keeps floor(channels * compression). Every
convolution is followed by a rectifier; there is no batch normalization,
which keeps runs bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import DimensionError, Tensor, conv2d, pool2d, relu


@dataclass(frozen=True)
class EncoderConfig:
    growth_rate: int
    block_depth: int
    initial_channels: int = 48
    num_blocks: int = 3
    compression: float = 0.5
    input_channels: int = 1
    stem_kernel: int = 3
    stem_stride: int = 1

    def __post_init__(self):
        if self.growth_rate < 1:
            raise ValueError(f"growth_rate must be >= 1, got {self.growth_rate}")
        if self.block_depth < 0:
            raise ValueError(f"block_depth must be >= 0, got {self.block_depth}")
        if not 0 < self.compression <= 1:
            raise ValueError(f"compression must be in (0, 1], got {self.compression}")
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.initial_channels < 1 or self.input_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.stem_kernel < 1 or self.stem_kernel % 2 == 0:
            raise ValueError(f"stem_kernel must be odd and >= 1, got {self.stem_kernel}")
        if self.stem_stride < 1:
            raise ValueError(f"stem_stride must be >= 1, got {self.stem_stride}")

    @property
    def downsample_factor(self) -> int:
        """Input pixels per feature cell along each axis."""
        return self.stem_stride * 2 * 2 ** (self.num_blocks - 1)

    def channel_plan(self) -> list[int]:
        """Channel counts after the stem and after each block/transition."""
        plan = [self.initial_channels]
        channels = self.initial_channels
        for block in range(self.num_blocks):
            channels += self.block_depth * self.growth_rate
            plan.append(channels)
            if block < self.num_blocks - 1:
                channels = int(channels * self.compression)
                plan.append(channels)
        return plan

    @property
    def output_channels(self) -> int:
        return self.channel_plan()[-1]


@dataclass
class FeatureGrid:
    """Encoder output: an H x W grid of feature vectors."""
    features: Tensor
    downsample_factor: int

    @property
    def height(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def channels(self) -> int:
        return self.features.shape[2]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def dense_block(x: Tensor, layers: list[dict[str, Tensor]]) -> Tensor:
    """Apply a dense block; ``layers`` holds per-layer bottleneck/conv weights.

    Each layer runs 1x1 reduce -> relu -> 3x3 conv (pad 1) -> relu and
    concatenates its output onto the running input, so spatial extents
    are unchanged and channels grow by the growth rate per layer. An
    empty layer list returns the input unchanged.
    """
    from .autodiff import concat_channels

    for layer in layers:
        reduced = relu(conv2d(x, layer["reduce.kernel"]) + layer["reduce.bias"])
        grown = relu(conv2d(reduced, layer["conv.kernel"], stride=1, padding=1) + layer["conv.bias"])
        x = concat_channels([x, grown])
    return x


def transition(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Compress channels with a 1x1 convolution, then 2x2 average pool."""
    h, w = x.shape[:2]
    if h < 2 or w < 2:
        raise DimensionError(f"transition needs spatial extents >= 2, got {(h, w)}")
    return pool2d(relu(conv2d(x, kernel) + bias), "average", window=2, stride=2)


class DenseEncoder:
    """Weight-bearing encoder; parameters live in an ordered name->Tensor map."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE0C]))
        c = config

        def add_conv(name, kh, kw, cin, cout):
            self.params[f"{name}.kernel"] = Tensor(
                _uniform(rng, (kh, kw, cin, cout), kh * kw * cin), requires_grad=True)
            self.params[f"{name}.bias"] = Tensor(np.zeros(cout), requires_grad=True)

        add_conv("stem", c.stem_kernel, c.stem_kernel, c.input_channels, c.initial_channels)
        channels = c.initial_channels
        for block in range(c.num_blocks):
            for layer in range(c.block_depth):
                cin = channels + layer * c.growth_rate
                add_conv(f"block{block}.layer{layer}.reduce", 1, 1, cin, 4 * c.growth_rate)
                add_conv(f"block{block}.layer{layer}.conv", 3, 3, 4 * c.growth_rate, c.growth_rate)
            channels += c.block_depth * c.growth_rate
            if block < c.num_blocks - 1:
                compressed = int(channels * c.compression)
                add_conv(f"trans{block}", 1, 1, channels, compressed)
                channels = compressed
        self.output_channels = channels

    def _block_layers(self, block: int) -> list[dict[str, Tensor]]:
        return [
            {
                "reduce.kernel": self.params[f"block{block}.layer{layer}.reduce.kernel"],
                "reduce.bias": self.params[f"block{block}.layer{layer}.reduce.bias"],
                "conv.kernel": self.params[f"block{block}.layer{layer}.conv.kernel"],
                "conv.bias": self.params[f"block{block}.layer{layer}.conv.bias"],
            }
            for layer in range(self.config.block_depth)
        ]

    def encode(self, image: Tensor | np.ndarray) -> FeatureGrid:
        """Extract the feature grid from one H x W x 1 image.

        Image extents must be divisible by the downsample factor; pad
        with the background value beforehand.
        """
        if not isinstance(image, Tensor):
            image = Tensor(image)
        if image.ndim != 3 or image.shape[2] != self.config.input_channels:
            raise DimensionError(
                f"expected H x W x {self.config.input_channels} image, got {image.shape}")
        factor = self.config.downsample_factor
        h, w = image.shape[:2]
        if h % factor or w % factor:
            raise DimensionError(
                f"image extents {(h, w)} not divisible by downsample factor {factor}")
        if h // factor < 1 or w // factor < 1:
            raise DimensionError(f"image {(h, w)} too small for downsample factor {factor}")

        c = self.config
        x = relu(conv2d(image, self.params["stem.kernel"], stride=c.stem_stride,
                        padding=c.stem_kernel // 2) + self.params["stem.bias"])
        x = pool2d(x, "max", window=2, stride=2)
        for block in range(c.num_blocks):
            x = dense_block(x, self._block_layers(block))
            if block < c.num_blocks - 1:
                x = transition(x, self.params[f"trans{block}.kernel"],
                               self.params[f"trans{block}.bias"])
        return FeatureGrid(features=x, downsample_factor=factor)
