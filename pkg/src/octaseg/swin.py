"""Windowed multi-head self-attention blocks.

Feature maps are cut into non-overlapping M x M windows and attention is
computed inside each window. Alternating blocks cyclically roll the map
by half a window first; an additive mask then blanks attention between
positions that wrapped around from different sides of the map, and the
roll is undone afterwards.

Layout convention: these blocks operate on channels-last [B, H, W, C]
maps; callers working in NCHW permute at the boundary.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .nn import LayerNorm, Linear, Module

MASK_FILL = -1e9


def window_partition(x: Tensor, window: int) -> Tensor:
    """[B, H, W, C] -> [B*nW, window*window, C]. Extents must divide."""
    B, H, W, C = x.shape
    if H % window or W % window:
        raise ValueError(f"extents {H}x{W} not divisible by window {window}")
    x = ad.reshape(x, (B, H // window, window, W // window, window, C))
    x = ad.permute(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (B * (H // window) * (W // window), window * window, C))


def window_reverse(windows: Tensor, window: int, H: int, W: int) -> Tensor:
    """Exact inverse of :func:`window_partition`."""
    nH, nW = H // window, W // window
    B = windows.shape[0] // (nH * nW)
    x = ad.reshape(windows, (B, nH, nW, window, window, windows.shape[-1]))
    x = ad.permute(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (B, H, W, windows.shape[-1]))


def build_shift_mask(H, W, window, shift):
    """Additive attention mask [nW, M*M, M*M] for the rolled layout.

    Positions are labeled by which of the 3x3 bands along each axis they
    came from before the roll; pairs with different labels get MASK_FILL
    so their post-softmax weight underflows to zero.
    """
    if not (0 < shift < window):
        raise ValueError(f"shift must satisfy 0 < s < window, got {shift}")
    labels = np.zeros((H, W), dtype=np.int64)
    bands = (slice(0, H - window), slice(H - window, H - shift), slice(H - shift, H))
    bands_w = (slice(0, W - window), slice(W - window, W - shift), slice(W - shift, W))
    region = 0
    for hs in bands:
        for ws in bands_w:
            labels[hs, ws] = region
            region += 1
    nH, nW = H // window, W // window
    win = labels.reshape(nH, window, nW, window).transpose(0, 2, 1, 3)
    win = win.reshape(nH * nW, window * window)
    mask = np.where(win[:, :, None] != win[:, None, :], MASK_FILL, 0.0)
    return mask.astype(np.float32)


def _default_heads(channels):
    """One head per ~36 channels, nudged down until it divides evenly."""
    h = max(1, round(channels / 36))
    while channels % h:
        h -= 1
    return h


class WindowAttention(Module):
    """Multi-head scaled dot-product attention inside one window.

    A learned relative-position bias (one table entry per (dy, dx) pair,
    per head) is added to the logits; ``use_position_bias=False`` drops
    it for ablations. The optional additive mask is applied per window
    before the softmax.
    """

    def __init__(self, channels, heads, window, use_position_bias=True, dtype=np.float32):
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.window = window
        self.use_position_bias = use_position_bias
        self.scale = 1.0 / np.sqrt(channels // heads)
        self.q = Linear(channels, channels, dtype=dtype)
        # a key bias shifts every logit in a row equally, which the softmax
        # cancels; it would be a permanently gradient-free parameter
        self.k = Linear(channels, channels, bias=False, dtype=dtype)
        self.v = Linear(channels, channels, dtype=dtype)
        self.proj = Linear(channels, channels, dtype=dtype)
        if use_position_bias:
            side = 2 * window - 1
            self.position_bias = Parameter(np.zeros((side * side, heads), dtype=dtype))
            self._bias_index = _relative_index(window)

    def _init_self(self, rng):
        if self.use_position_bias:
            self.position_bias.data[...] = 0.0

    def forward(self, windows: Tensor, mask=None, return_weights=False):
        N, T, C = windows.shape
        hd = C // self.heads

        def split_heads(t):
            return ad.permute(ad.reshape(t, (N, T, self.heads, hd)), (0, 2, 1, 3))

        q = split_heads(self.q(windows))
        k = split_heads(self.k(windows))
        v = split_heads(self.v(windows))

        logits = ad.matmul(q, ad.permute(k, (0, 1, 3, 2))) * self.scale  # [N, heads, T, T]
        if self.use_position_bias:
            bias = ad.take_rows(self.position_bias, self._bias_index)    # [T*T, heads]
            bias = ad.permute(ad.reshape(bias, (T, T, self.heads)), (2, 0, 1))
            logits = logits + ad.reshape(bias, (1, self.heads, T, T))
        if mask is not None:
            nW = mask.shape[0]
            logits = ad.reshape(logits, (N // nW, nW, self.heads, T, T))
            logits = logits + Tensor(mask.reshape(1, nW, 1, T, T).astype(windows.data.dtype))
            logits = ad.reshape(logits, (N, self.heads, T, T))
        attn = ad.softmax(logits, axis=-1)
        out = ad.matmul(attn, v)                                          # [N, heads, T, hd]
        out = ad.reshape(ad.permute(out, (0, 2, 1, 3)), (N, T, C))
        out = self.proj(out)
        if return_weights:
            return out, attn
        return out


def _relative_index(window):
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :] + window - 1
    return (rel[0] * (2 * window - 1) + rel[1]).reshape(-1)


class MLP(Module):
    """Two linear layers with a GELU between, hidden width 4x."""

    def __init__(self, channels, ratio=4, dtype=np.float32):
        self.fc1 = Linear(channels, ratio * channels, dtype=dtype)
        self.fc2 = Linear(ratio * channels, channels, dtype=dtype)

    def forward(self, x):
        return self.fc2(ad.gelu(self.fc1(x)))


class SwinBlockPair(Module):
    """One plain-window block followed by one shifted-window block.

    Each block is pre-norm residual: x + Attn(LN(x)) then x + MLP(LN(x)).
    The shifted block rolls the map by -(M/2, M/2) first, attends with
    the wrap mask, and unrolls. Maps whose extents do not divide the
    window are reflect-padded for the pair and cropped back afterwards.
    """

    def __init__(self, channels, heads=None, window=8, use_position_bias=True,
                 dtype=np.float32):
        heads = _default_heads(channels) if heads is None else heads
        self.channels = channels
        self.window = window
        self.shift = window // 2
        self.norm1 = LayerNorm(channels, dtype=dtype)
        self.attn = WindowAttention(channels, heads, window, use_position_bias, dtype=dtype)
        self.norm2 = LayerNorm(channels, dtype=dtype)
        self.mlp1 = MLP(channels, dtype=dtype)
        self.norm3 = LayerNorm(channels, dtype=dtype)
        self.attn_shifted = WindowAttention(channels, heads, window, use_position_bias, dtype=dtype)
        self.norm4 = LayerNorm(channels, dtype=dtype)
        self.mlp2 = MLP(channels, dtype=dtype)
        self._mask_cache = {}

    def _mask_for(self, H, W):
        key = (H, W)
        if key not in self._mask_cache:
            self._mask_cache[key] = build_shift_mask(H, W, self.window, self.shift)
        return self._mask_cache[key]

    def forward(self, x: Tensor) -> Tensor:
        B, H, W, C = x.shape
        M = self.window
        pad_h = (M - H % M) % M
        pad_w = (M - W % M) % M
        if pad_h or pad_w:
            # reflection needs pad < extent; tiny maps fall back to zeros
            mode = "reflect" if pad_h < H and pad_w < W else "zero"
            x = ad.pad_hw(x, (0, pad_h, 0, pad_w), mode=mode, axes=(1, 2))
        Hp, Wp = H + pad_h, W + pad_w

        # plain windows
        h = window_partition(self.norm1(x), M)
        h = window_reverse(self.attn(h), M, Hp, Wp)
        x = x + h
        x = x + self.mlp1(self.norm2(x))

        # shifted windows with wrap mask
        s = self.shift
        h = ad.cyclic_roll(self.norm3(x), (-s, -s), axis=(1, 2))
        h = window_partition(h, M)
        h = self.attn_shifted(h, mask=self._mask_for(Hp, Wp))
        h = ad.cyclic_roll(window_reverse(h, M, Hp, Wp), (s, s), axis=(1, 2))
        x = x + h
        x = x + self.mlp2(self.norm4(x))

        if pad_h or pad_w:
            x = ad.crop_hw(x, 0, 0, H, W, axes=(1, 2))
        return x


class PatchMerging(Module):
    """Halve both spatial extents and double the channels.

    The four 2x2-strided sub-grids are stacked on the channel axis in
    (dy, dx) order (0,0), (0,1), (1,0), (1,1), normalized, then linearly
    projected 4C -> 2C without bias.
    """

    def __init__(self, channels, dtype=np.float32):
        self.channels = channels
        self.norm = LayerNorm(4 * channels, dtype=dtype)
        self.reduce = Linear(4 * channels, 2 * channels, bias=False, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.reduce(self.norm(gather_2x2_blocks(x)))


def gather_2x2_blocks(x: Tensor) -> Tensor:
    """[B, H, W, C] -> [B, H/2, W/2, 4C]: output position (i, j) holds the
    channel blocks of x[:, 2i+dy, 2j+dx, :] for (dy, dx) in (0,0), (0,1),
    (1,0), (1,1)."""
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"patch merging needs even extents, got {H}x{W}")
    x = ad.reshape(x, (B, H // 2, 2, W // 2, 2, C))
    x = ad.permute(x, (0, 1, 3, 2, 4, 5))
    return ad.reshape(x, (B, H // 2, W // 2, 4 * C))
