"""Named gradient checks for every primitive and composite operation.

Each check builds small float64 inputs, runs one scalar-valued forward,
and compares the recorded gradients with central finite differences.
Output elements are mixed through a fixed random projection before the
reduction so per-element adjoint errors cannot cancel.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dsconv import SnakeConv2d, SnakeConvBlock
from .gradcheck import check_gradients, rand64
from .losses import SkeletonConfig, cl_dice_loss
from .swin import PatchMerging, SwinBlockPair


def _project(out, rng=None):
    # fixed projection: finite differencing re-evaluates the function, so
    # the mixing weights must not change between calls
    r = Tensor(np.random.default_rng(12345).standard_normal(out.shape))
    return (out * r).sum()


def _fractional_coords(rng, shape, lo, hi):
    """Coordinates with fractional parts away from the bilinear kinks."""
    base = rng.integers(lo, hi, size=shape).astype(np.float64)
    return base + rng.uniform(0.2, 0.8, size=shape)


def _randomize_module(module, rng):
    for _, p in module.named_parameters():
        p.data = rng.uniform(-0.5, 0.5, size=p.data.shape).astype(np.float64)


def _module_check(build, run):
    """Check gradients of a module w.r.t. its input and all parameters."""
    rng = np.random.default_rng(7)
    module, x = build(rng)
    _randomize_module(module, rng)
    tensors = [x] + module.parameters()
    proj = {}

    def f(*ts):
        out = run(module, ts[0])
        if "r" not in proj:
            proj["r"] = Tensor(np.random.default_rng(3).standard_normal(out.shape))
        return (out * proj["r"]).sum()

    return check_gradients(f, tensors)


def gradient_checks():
    """Return [(name, callable)] covering every differentiable operation."""
    checks = []

    def named(name):
        def deco(fn):
            checks.append((name, fn))
            return fn
        return deco

    # ---------------- elementwise ----------------
    @named("add")
    def _():
        rng = np.random.default_rng(0)
        a, b = rand64(rng, 3, 4), rand64(rng, 3, 4)
        return check_gradients(lambda a, b: _project(ad.add(a, b), rng), [a, b])

    @named("add_broadcast")
    def _():
        rng = np.random.default_rng(1)
        a, b = rand64(rng, 3, 4), rand64(rng, 1, 4)
        return check_gradients(lambda a, b: _project(ad.add(a, b), rng), [a, b])

    @named("sub")
    def _():
        rng = np.random.default_rng(2)
        a, b = rand64(rng, 2, 5), rand64(rng, 2, 5)
        return check_gradients(lambda a, b: _project(ad.sub(a, b), rng), [a, b])

    @named("mul")
    def _():
        rng = np.random.default_rng(3)
        a, b = rand64(rng, 4, 4), rand64(rng, 4, 4)
        return check_gradients(lambda a, b: _project(ad.mul(a, b), rng), [a, b])

    @named("div")
    def _():
        rng = np.random.default_rng(4)
        a = rand64(rng, 3, 3)
        b = rand64(rng, 3, 3, lo=0.5, hi=2.0)
        return check_gradients(lambda a, b: _project(ad.div(a, b), rng), [a, b])

    @named("neg")
    def _():
        rng = np.random.default_rng(5)
        a = rand64(rng, 8)
        return check_gradients(lambda a: _project(ad.neg(a), rng), [a])

    @named("minimum")
    def _():
        rng = np.random.default_rng(6)
        a, b = rand64(rng, 4, 4), rand64(rng, 4, 4)
        return check_gradients(lambda a, b: _project(ad.minimum(a, b), rng), [a, b])

    @named("relu")
    def _():
        rng = np.random.default_rng(7)
        data = rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1.0, 1.0], (3, 4))
        a = Tensor(data, requires_grad=True)
        return check_gradients(lambda a: _project(ad.relu(a), rng), [a])

    @named("gelu")
    def _():
        rng = np.random.default_rng(8)
        a = rand64(rng, 3, 5, lo=-2.0, hi=2.0)
        return check_gradients(lambda a: _project(ad.gelu(a), rng), [a])

    @named("tanh")
    def _():
        rng = np.random.default_rng(9)
        a = rand64(rng, 6, lo=-2.0, hi=2.0)
        return check_gradients(lambda a: _project(ad.tanh(a), rng), [a])

    @named("sigmoid")
    def _():
        rng = np.random.default_rng(10)
        a = rand64(rng, 6, lo=-3.0, hi=3.0)
        return check_gradients(lambda a: _project(ad.sigmoid(a), rng), [a])

    # ---------------- reductions / shape ----------------
    @named("sum_axis")
    def _():
        rng = np.random.default_rng(11)
        a = rand64(rng, 2, 3, 4)
        return check_gradients(lambda a: _project(ad.tsum(a, axis=1), rng), [a])

    @named("mean")
    def _():
        rng = np.random.default_rng(12)
        a = rand64(rng, 2, 3, 4)
        return check_gradients(lambda a: _project(ad.tmean(a, axis=(0, 2)), rng), [a])

    @named("reshape")
    def _():
        rng = np.random.default_rng(13)
        a = rand64(rng, 2, 6)
        return check_gradients(lambda a: _project(ad.reshape(a, (3, 4)), rng), [a])

    @named("permute")
    def _():
        rng = np.random.default_rng(14)
        a = rand64(rng, 2, 3, 4)
        return check_gradients(lambda a: _project(ad.permute(a, (2, 0, 1)), rng), [a])

    @named("flip")
    def _():
        rng = np.random.default_rng(15)
        a = rand64(rng, 3, 4)
        return check_gradients(lambda a: _project(ad.flip(a, 1), rng), [a])

    @named("concat")
    def _():
        rng = np.random.default_rng(16)
        a, b = rand64(rng, 2, 3), rand64(rng, 4, 3)
        return check_gradients(lambda a, b: _project(ad.concat([a, b], axis=0), rng), [a, b])

    @named("cumsum")
    def _():
        rng = np.random.default_rng(17)
        a = rand64(rng, 3, 5)
        return check_gradients(lambda a: _project(ad.cumsum(a, axis=1), rng), [a])

    @named("cyclic_roll")
    def _():
        rng = np.random.default_rng(18)
        a = rand64(rng, 4, 6)
        return check_gradients(
            lambda a: _project(ad.cyclic_roll(a, (1, -2), axis=(0, 1)), rng), [a])

    @named("narrow")
    def _():
        rng = np.random.default_rng(19)
        a = rand64(rng, 4, 6)
        return check_gradients(lambda a: _project(ad.narrow(a, 1, 2, 3), rng), [a])

    @named("take_rows")
    def _():
        rng = np.random.default_rng(20)
        table = rand64(rng, 5, 3)
        idx = np.array([0, 2, 2, 4, 1])
        return check_gradients(lambda t: _project(ad.take_rows(t, idx), rng), [table])

    @named("pad_zero")
    def _():
        rng = np.random.default_rng(21)
        a = rand64(rng, 1, 1, 3, 4)
        return check_gradients(
            lambda a: _project(ad.pad_hw(a, (1, 2, 0, 1), mode="zero"), rng), [a])

    @named("pad_reflect")
    def _():
        rng = np.random.default_rng(22)
        a = rand64(rng, 1, 1, 4, 4)
        return check_gradients(
            lambda a: _project(ad.pad_hw(a, (2, 1, 1, 2), mode="reflect"), rng), [a])

    @named("crop")
    def _():
        rng = np.random.default_rng(23)
        a = rand64(rng, 1, 1, 5, 5)
        return check_gradients(
            lambda a: _project(ad.crop_hw(a, 1, 2, 3, 2), rng), [a])

    # ---------------- linear algebra ----------------
    @named("matmul_2d")
    def _():
        rng = np.random.default_rng(24)
        a, b = rand64(rng, 3, 4), rand64(rng, 4, 2)
        return check_gradients(lambda a, b: _project(ad.matmul(a, b), rng), [a, b])

    @named("matmul_batched")
    def _():
        rng = np.random.default_rng(25)
        a, b = rand64(rng, 2, 2, 3, 2), rand64(rng, 2, 2, 2, 3)
        return check_gradients(lambda a, b: _project(ad.matmul(a, b), rng), [a, b])

    @named("linear")
    def _():
        rng = np.random.default_rng(26)
        x, w, b = rand64(rng, 2, 3, 4), rand64(rng, 5, 4), rand64(rng, 5)
        return check_gradients(lambda x, w, b: _project(ad.linear(x, w, b), rng), [x, w, b])

    # ---------------- conv / pooling / sampling ----------------
    @named("conv2d_same")
    def _():
        rng = np.random.default_rng(27)
        x = rand64(rng, 1, 2, 4, 4)
        w = rand64(rng, 3, 2, 3, 3)
        b = rand64(rng, 3)
        return check_gradients(
            lambda x, w, b: _project(ad.conv2d(x, w, b), rng), [x, w, b])

    @named("conv2d_stride2")
    def _():
        rng = np.random.default_rng(28)
        x = rand64(rng, 1, 2, 5, 5)
        w = rand64(rng, 2, 2, 3, 3)
        b = rand64(rng, 2)
        return check_gradients(
            lambda x, w, b: _project(ad.conv2d(x, w, b, stride=2, padding=1), rng),
            [x, w, b])

    @named("max_pool2d")
    def _():
        rng = np.random.default_rng(29)
        x = rand64(rng, 1, 2, 5, 5)
        return check_gradients(
            lambda x: _project(ad.max_pool2d(x, kernel=(3, 3), stride=1, padding=1), rng),
            [x])

    @named("max_pool2d_cross")
    def _():
        rng = np.random.default_rng(30)
        x = rand64(rng, 1, 1, 5, 5)
        return check_gradients(
            lambda x: _project(ad.max_pool2d(x, kernel=(3, 1), stride=1, padding=(1, 0)), rng),
            [x])

    @named("upsample_nearest2x")
    def _():
        rng = np.random.default_rng(31)
        x = rand64(rng, 1, 2, 3, 4)
        return check_gradients(lambda x: _project(ad.upsample_nearest2x(x), rng), [x])

    @named("bilinear_sample")
    def _():
        rng = np.random.default_rng(32)
        feat = rand64(rng, 1, 2, 4, 4)
        coords = Tensor(_fractional_coords(rng, (1, 2, 3, 2, 2), -2, 5),
                        requires_grad=True)
        return check_gradients(
            lambda f, c: _project(ad.bilinear_sample(f, c), rng), [feat, coords])

    # ---------------- normalization / attention ----------------
    @named("layer_norm")
    def _():
        rng = np.random.default_rng(33)
        x = rand64(rng, 2, 3, 4)
        gamma = rand64(rng, 4, lo=0.5, hi=1.5)
        beta = rand64(rng, 4)
        return check_gradients(
            lambda x, g, b: _project(ad.layer_norm(x, g, b), rng), [x, gamma, beta])

    @named("softmax")
    def _():
        rng = np.random.default_rng(34)
        x = rand64(rng, 2, 3, 4, lo=-2.0, hi=2.0)
        return check_gradients(lambda x: _project(ad.softmax(x, axis=-1), rng), [x])

    # ---------------- composites ----------------
    @named("snake_conv_end_to_end")
    def _():
        def build(rng):
            module = SnakeConv2d(2, 2, axis="x", kernel_points=5, dtype=np.float64)
            x = rand64(rng, 1, 2, 7, 7)
            return module, x
        return _module_check(build, lambda m, x: m(x))

    @named("snake_block_end_to_end")
    def _():
        def build(rng):
            module = SnakeConvBlock(2, 2, kernel_points=5, dtype=np.float64)
            x = rand64(rng, 1, 2, 7, 7)
            return module, x
        return _module_check(build, lambda m, x: m(x))

    @named("swin_block_pair")
    def _():
        def build(rng):
            module = SwinBlockPair(4, heads=2, window=4, dtype=np.float64)
            x = rand64(rng, 1, 8, 8, 4)
            return module, x
        return _module_check(build, lambda m, x: m(x))

    @named("patch_merging")
    def _():
        def build(rng):
            module = PatchMerging(3, dtype=np.float64)
            x = rand64(rng, 1, 4, 4, 3)
            return module, x
        return _module_check(build, lambda m, x: m(x))

    @named("cl_dice_loss")
    def _():
        rng = np.random.default_rng(40)
        pred = Tensor(rng.uniform(0.05, 0.95, (1, 1, 8, 8)), requires_grad=True)
        target = Tensor((rng.random((1, 1, 8, 8)) > 0.6).astype(np.float64))
        return check_gradients(
            lambda p: cl_dice_loss(p, target, SkeletonConfig(3)), [pred])

    return checks
