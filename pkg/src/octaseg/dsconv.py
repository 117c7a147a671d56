"""Dynamic snake convolution.

A 1-D kernel is dragged along one image axis while its sample positions
drift along the other axis by learned, accumulated offsets. Each per-step
offset is squashed into (-1, 1) by tanh, so the displacement after m
steps stays strictly below m and the kernel cannot tear.

Axis convention: the "x" variant keeps sample x-coordinates on the
integer grid (j + m) and bends the y-coordinates; the "y" variant is the
transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .nn import Conv2d, Module, _fan_in_uniform

AXES = ("x", "y")


@dataclass
class DSConvConfig:
    in_channels: int
    out_channels: int
    axis: str = "x"
    kernel_points: int = 9

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.kernel_points < 3 or self.kernel_points % 2 == 0:
            raise ValueError(f"kernel_points must be odd and >= 3, got {self.kernel_points}")


def accumulate_positions(offsets: Tensor, axis: str, kernel_points: int) -> Tensor:
    """Turn per-step offsets into absolute sample coordinates.

    ``offsets`` is [B, kernel_points-1, H, W]; channels are ordered by
    sample index m = -h..-1, +1..+h (h = (kernel_points-1)//2). The
    displacement at m is the sum of the per-step offsets between the
    kernel center and m, so it grows cumulatively outward from the
    center and the center point itself never moves.

    Returns coordinates [B, 2, kernel_points, H, W] with (y, x) in pixel
    units along the second axis.
    """
    B, n_off, H, W = offsets.shape
    K = kernel_points
    h = (K - 1) // 2
    if n_off != K - 1:
        raise ValueError(f"expected {K - 1} offset channels, got {n_off}")

    neg = ad.narrow(offsets, 1, 0, h)      # channels for m = -h..-1
    pos = ad.narrow(offsets, 1, h, h)      # channels for m = +1..+h
    disp_pos = ad.cumsum(pos, axis=1)
    # negative side accumulates from the center outward as well
    disp_neg = ad.flip(ad.cumsum(ad.flip(neg, 1), axis=1), 1)

    dtype = offsets.data.dtype
    center = Tensor(np.zeros((B, 1, H, W), dtype=dtype))
    disp = ad.concat([disp_neg, center, disp_pos], axis=1)  # [B, K, H, W]

    ii = np.arange(H, dtype=dtype).reshape(1, 1, H, 1)
    jj = np.arange(W, dtype=dtype).reshape(1, 1, 1, W)
    mm = np.arange(-h, h + 1, dtype=dtype).reshape(1, K, 1, 1)

    if axis == "x":
        y_pos = disp + ii                                    # deformed
        x_fixed = np.broadcast_to(jj + mm, (B, K, H, W)).copy()
        y = ad.reshape(y_pos, (B, 1, K, H, W))
        x = Tensor(x_fixed.reshape(B, 1, K, H, W))
    else:
        x_pos = disp + jj
        y_fixed = np.broadcast_to(ii + mm, (B, K, H, W)).copy()
        x = ad.reshape(x_pos, (B, 1, K, H, W))
        y = Tensor(y_fixed.reshape(B, 1, K, H, W))
    return ad.concat([y, x], axis=1)


class SnakeConv2d(Module):
    """Single-axis deformable line convolution.

    The offset predictor is a 3x3 convolution followed by tanh and starts
    at zero, so an untrained layer samples the straight integer line and
    behaves exactly like a rigid 1 x kernel_points convolution.
    """

    def __init__(self, in_channels, out_channels, axis="x", kernel_points=9,
                 dtype=np.float32):
        self.cfg = DSConvConfig(in_channels, out_channels, axis, kernel_points)
        self.dtype = dtype
        K = kernel_points
        self.offset_conv = Conv2d(in_channels, K - 1, 3, zero_init=True, dtype=dtype)
        self.weight = Parameter(np.zeros((out_channels, in_channels, K), dtype=dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def _init_self(self, rng):
        fan_in = self.cfg.in_channels * self.cfg.kernel_points
        self.weight.data[...] = _fan_in_uniform(rng, self.weight.data.shape, fan_in, self.dtype)
        self.bias.data[...] = 0.0

    def predict_offsets(self, feature: Tensor) -> Tensor:
        """Per-pixel, per-step offsets in (-1, 1), one channel per
        non-center sample point."""
        self._check_extent(feature)
        return ad.tanh(self.offset_conv(feature))

    def _check_extent(self, feature):
        K = self.cfg.kernel_points
        _, _, H, W = feature.shape
        if H < K or W < K:
            raise ValueError(
                f"snake kernel with {K} sample points needs spatial extents >= {K}, "
                f"got {H}x{W}"
            )

    def forward(self, feature: Tensor) -> Tensor:
        cfg = self.cfg
        B, C, H, W = feature.shape
        offsets = self.predict_offsets(feature)
        coords = accumulate_positions(offsets, cfg.axis, cfg.kernel_points)
        sampled = ad.bilinear_sample(feature, coords)        # [B, C, K, H, W]
        stacked = ad.reshape(ad.permute(sampled, (0, 3, 4, 1, 2)), (B, H, W, C * cfg.kernel_points))
        w2 = ad.reshape(self.weight, (cfg.out_channels, C * cfg.kernel_points))
        out = ad.linear(stacked, w2, self.bias)              # [B, H, W, out]
        return ad.permute(out, (0, 3, 1, 2))


class SnakeConvBlock(Module):
    """Three-branch feature block: x-axis snake, y-axis snake, and a plain
    3x3 convolution, concatenated and fused by a 1x1 convolution + ReLU."""

    def __init__(self, in_channels, out_channels, kernel_points=9, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.branch_x = SnakeConv2d(in_channels, out_channels, "x", kernel_points, dtype=dtype)
        self.branch_y = SnakeConv2d(in_channels, out_channels, "y", kernel_points, dtype=dtype)
        self.branch_std = Conv2d(in_channels, out_channels, 3, dtype=dtype)
        self.fuse = Conv2d(3 * out_channels, out_channels, 1, dtype=dtype)

    def forward(self, feature: Tensor) -> Tensor:
        fx = self.branch_x(feature)
        fy = self.branch_y(feature)
        fs = self.branch_std(feature)
        fused = self.fuse(ad.concat([fx, fy, fs], axis=1))
        return ad.relu(fused)
