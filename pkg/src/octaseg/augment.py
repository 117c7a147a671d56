"""Deterministic training-time augmentation.

Parameters are drawn from an explicit generator and applied in a second
step, so one rng state fully determines the augmented pair and the two
halves can be tested separately. Geometric operations are applied
identically to image and mask; photometric operations touch the image
only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .data import SampleRecord


@dataclass
class AugmentConfig:
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_brightness: float = 0.5
    brightness_range: tuple = (0.8, 1.2)
    p_rotate: float = 0.5
    rotate_degrees: float = 15.0
    p_blur: float = 0.3
    p_dropout: float = 0.3
    dropout_count: tuple = (1, 4)
    dropout_max_frac: float = 0.10


@dataclass
class AugmentParams:
    hflip: bool = False
    vflip: bool = False
    brightness: float | None = None
    angle: float | None = None
    blur: bool = False
    dropout_rects: tuple = ()   # (y, x, h, w) in relative [0, 1] units


def draw_params(rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()) -> AugmentParams:
    """Sample one augmentation decision per op, independently."""
    p = AugmentParams()
    p.hflip = rng.random() < cfg.p_hflip
    p.vflip = rng.random() < cfg.p_vflip
    if rng.random() < cfg.p_brightness:
        p.brightness = float(rng.uniform(*cfg.brightness_range))
    if rng.random() < cfg.p_rotate:
        p.angle = float(rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees))
    p.blur = rng.random() < cfg.p_blur
    if rng.random() < cfg.p_dropout:
        count = int(rng.integers(cfg.dropout_count[0], cfg.dropout_count[1] + 1))
        rects = []
        for _ in range(count):
            h = float(rng.uniform(0.02, cfg.dropout_max_frac))
            w = float(rng.uniform(0.02, cfg.dropout_max_frac))
            y = float(rng.uniform(0.0, 1.0 - h))
            x = float(rng.uniform(0.0, 1.0 - w))
            rects.append((y, x, h, w))
        p.dropout_rects = tuple(rects)
    return p


def apply_geometry(arr: np.ndarray, params: AugmentParams, nearest: bool) -> np.ndarray:
    """Flips and rotation for a [C, H, W] array; masks use nearest resampling."""
    out = arr
    if params.hflip:
        out = out[:, :, ::-1]
    if params.vflip:
        out = out[:, ::-1, :]
    if params.angle is not None:
        order = 0 if nearest else 1
        out = np.stack([
            ndimage.rotate(ch, params.angle, reshape=False, order=order,
                           mode="constant", cval=0.0)
            for ch in out
        ])
    return np.ascontiguousarray(out, dtype=np.float32)


def apply_params(sample: SampleRecord, params: AugmentParams) -> SampleRecord:
    image = apply_geometry(sample.image, params, nearest=False)
    target = sample.target
    if target is not None:
        target = apply_geometry(target, params, nearest=True)
        target = (target > 0.5).astype(np.float32)

    if params.brightness is not None:
        image = np.clip(image * params.brightness, 0.0, 1.0)
    if params.blur:
        image = ndimage.uniform_filter(image, size=(1, 3, 3), mode="reflect")
    if params.dropout_rects:
        _, H, W = image.shape
        for y, x, h, w in params.dropout_rects:
            y0, x0 = int(y * H), int(x * W)
            y1, x1 = max(y0 + 1, int((y + h) * H)), max(x0 + 1, int((x + w) * W))
            image[:, y0:y1, x0:x1] = 0.0
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return replace(sample, image=image, target=target)


def augment(sample: SampleRecord, rng: np.random.Generator,
            cfg: AugmentConfig = AugmentConfig()) -> SampleRecord:
    """Draw parameters from ``rng`` and apply them to the sample."""
    return apply_params(sample, draw_params(rng, cfg))


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Pre-assigned per-sample generator, independent of batch scheduling."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))
