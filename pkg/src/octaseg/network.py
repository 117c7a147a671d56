"""Full segmentation network: encoder variants, U-shaped decoder, head.

Two encoder layouts are provided. The dual-branch encoder runs a snake
convolution path and a windowed-attention path in parallel at every
stage and fuses them; the alternating encoder runs the two block types
in sequence. Either way, stage k emits a skip tensor with extents
input/2^(k+1) and init_channels * 2^k channels, and the decoder mirrors
that schedule back up to a single-channel probability map.

Inputs whose extents are not divisible by the downsampling factor are
reflect-padded on the way in and cropped on the way out, so the output
mask always matches the input extents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsconv import SnakeConvBlock
from .nn import Conv2d, Module
from .swin import PatchMerging, SwinBlockPair

VARIANTS = ("dual", "alt")


@dataclass
class ArchitectureConfig:
    variant: str = "dual"
    init_channels: int | None = None   # 72 for dual, 108 for alt when unset
    depth: int = 4
    dsconv_kernel_points: int = 9
    in_channels: int = 3
    out_channels: int = 1
    window: int = 8
    use_position_bias: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.init_channels is None:
            self.init_channels = 72 if self.variant == "dual" else 108
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.dsconv_kernel_points % 2 == 0:
            raise ValueError("dsconv_kernel_points must be odd")

    def stage_channels(self):
        return [self.init_channels * 2 ** k for k in range(self.depth)]

    @property
    def pad_multiple(self):
        # the dual patchify stem needs /4; depth halvings need /2^depth
        return max(2 ** self.depth, 4)


# the ~170k-parameter configuration documented in the README; derived by
# scanning (init_channels, depth, kernel_points) against count_parameters
# (168,712 parameters)
LIGHTWEIGHT_CONFIG = ArchitectureConfig(
    variant="dual", init_channels=11, depth=3, dsconv_kernel_points=9)


class DualBranchStage(Module):
    """Parallel snake + attention paths, fused after both halve the extents.

    The snake path downsamples with a stride-2 convolution; the attention
    path downsamples with patch merging (a 4x4-stride-4 patchify plus a
    x2 upsample at the first stage, which sees the raw image). Outputs
    are concatenated and fused by a 1x1 convolution + ReLU.
    """

    def __init__(self, in_channels, out_channels, first, cfg, dtype=np.float32):
        self.first = first
        self.out_channels = out_channels
        k = cfg.dsconv_kernel_points
        self.snake = SnakeConvBlock(in_channels, out_channels, k, dtype=dtype)
        self.snake_down = Conv2d(out_channels, out_channels, 3, stride=2, padding=1, dtype=dtype)
        if first:
            self.patchify = Conv2d(in_channels, out_channels, 4, stride=4, padding=0, dtype=dtype)
        else:
            self.merge = PatchMerging(in_channels, dtype=dtype)
        self.swin = SwinBlockPair(out_channels, window=cfg.window,
                                  use_position_bias=cfg.use_position_bias, dtype=dtype)
        self.fuse = Conv2d(2 * out_channels, out_channels, 1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        local = self.snake_down(self.snake(x))
        if self.first:
            g = self.patchify(x)
            g = ad.permute(g, (0, 2, 3, 1))
            g = self.swin(g)
            g = ad.permute(g, (0, 3, 1, 2))
            g = ad.upsample_nearest2x(g)
        else:
            g = self.merge(ad.permute(x, (0, 2, 3, 1)))
            g = self.swin(g)
            g = ad.permute(g, (0, 3, 1, 2))
        return ad.relu(self.fuse(ad.concat([local, g], axis=1)))


class AlternatingStage(Module):
    """Snake block then attention pair in sequence, then stride-2 downsample."""

    def __init__(self, in_channels, out_channels, cfg, dtype=np.float32):
        self.out_channels = out_channels
        k = cfg.dsconv_kernel_points
        self.snake = SnakeConvBlock(in_channels, out_channels, k, dtype=dtype)
        self.swin = SwinBlockPair(out_channels, window=cfg.window,
                                  use_position_bias=cfg.use_position_bias, dtype=dtype)
        self.down = Conv2d(out_channels, out_channels, 3, stride=2, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = self.snake(x)
        x = ad.permute(self.swin(ad.permute(x, (0, 2, 3, 1))), (0, 3, 1, 2))
        return self.down(x)


class Encoder(Module):
    def __init__(self, cfg: ArchitectureConfig, dtype=np.float32):
        self.cfg = cfg
        stages = []
        in_ch = cfg.in_channels
        for k, out_ch in enumerate(cfg.stage_channels()):
            if cfg.variant == "dual":
                stages.append(DualBranchStage(in_ch, out_ch, first=(k == 0), cfg=cfg, dtype=dtype))
            else:
                stages.append(AlternatingStage(in_ch, out_ch, cfg=cfg, dtype=dtype))
            in_ch = out_ch
        self.stages = stages

    def forward(self, x: Tensor):
        """Return the per-stage skip tensors, shallow to deep."""
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)
        return skips


class DecoderStage(Module):
    """x2 upsample, concat the matching skip, two 3x3 conv + ReLU."""

    def __init__(self, below_channels, skip_channels, dtype=np.float32):
        self.conv1 = Conv2d(below_channels + skip_channels, skip_channels, 3, dtype=dtype)
        self.conv2 = Conv2d(skip_channels, skip_channels, 3, dtype=dtype)

    def forward(self, x, skip):
        x = ad.upsample_nearest2x(x)
        if x.shape[2:] != skip.shape[2:]:
            raise ValueError(
                f"decoder/skip extent mismatch: {x.shape[2:]} vs {skip.shape[2:]}")
        x = ad.concat([x, skip], axis=1)
        x = ad.relu(self.conv1(x))
        return ad.relu(self.conv2(x))


class Decoder(Module):
    def __init__(self, cfg: ArchitectureConfig, dtype=np.float32):
        chans = cfg.stage_channels()
        self.stages = [
            DecoderStage(chans[j + 1], chans[j], dtype=dtype)
            for j in reversed(range(cfg.depth - 1))
        ]
        F = chans[0]
        self.head_conv1 = Conv2d(F, F, 3, dtype=dtype)
        self.head_conv2 = Conv2d(F, F, 3, dtype=dtype)
        self.head_out = Conv2d(F, cfg.out_channels, 1, dtype=dtype)

    def forward(self, skips):
        x = skips[-1]
        for stage, skip in zip(self.stages, reversed(skips[:-1])):
            x = stage(x, skip)
        x = ad.upsample_nearest2x(x)
        x = ad.relu(self.head_conv1(x))
        x = ad.relu(self.head_conv2(x))
        return self.head_out(x)


class SegmentationModel(Module):
    """Encoder + decoder + sigmoid head producing [B, 1, H, W] in (0, 1)."""

    def __init__(self, cfg: ArchitectureConfig, dtype=np.float32):
        self.cfg = cfg
        self.encoder = Encoder(cfg, dtype=dtype)
        self.decoder = Decoder(cfg, dtype=dtype)

    def _padded_extent(self, n):
        mult = self.cfg.pad_multiple
        return ((n + mult - 1) // mult) * mult

    def _validate_extents(self, H, W):
        cfg = self.cfg
        deepest = min(self._padded_extent(H), self._padded_extent(W)) // 2 ** (cfg.depth - 1)
        k = cfg.dsconv_kernel_points
        if deepest < k:
            need = k * 2 ** (cfg.depth - 1)
            raise ValueError(
                f"input extents {H}x{W} too small for depth {cfg.depth}: the deepest "
                f"stage would see {deepest} pixels per axis but the snake kernel needs "
                f">= {k}; supply extents of at least {need}"
            )

    def forward(self, x: Tensor, return_logits=False) -> Tensor:
        B, C, H, W = x.shape
        if C != self.cfg.in_channels:
            raise ValueError(f"expected {self.cfg.in_channels} input channels, got {C}")
        self._validate_extents(H, W)
        Hp, Wp = self._padded_extent(H), self._padded_extent(W)
        if (Hp, Wp) != (H, W):
            x = ad.pad_hw(x, (0, Hp - H, 0, Wp - W), mode="reflect")
        skips = self.encoder(x)
        logits = self.decoder(skips)
        if (Hp, Wp) != (H, W):
            logits = ad.crop_hw(logits, 0, 0, H, W)
        if return_logits:
            return logits
        return ad.sigmoid(logits)


def count_parameters(model: Module) -> int:
    """Total number of learnable scalars in the model."""
    return int(sum(p.data.size for p in model.parameters()))


def init_parameters(model: Module, seed: int) -> None:
    """Deterministically (re)initialize every parameter.

    Convolution and linear weights draw from a fan-in-scaled uniform
    distribution, biases and attention bias tables start at zero, layer
    norms start at identity, and snake offset predictors start at zero
    so the kernels begin on the straight integer grid.
    """
    rng = np.random.default_rng(seed)
    model.init(rng)
    model.assign_names()


def build_model(cfg: ArchitectureConfig, seed: int = 0, dtype=np.float32) -> SegmentationModel:
    model = SegmentationModel(cfg, dtype=dtype)
    init_parameters(model, seed)
    return model
