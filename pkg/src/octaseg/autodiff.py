"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray and records the operation that produced it.
Calling :func:`backward` on a scalar result walks the recorded graph in
reverse topological order and accumulates gradients into the leaves.

Float32 is the working precision for training; float64 is supported so
gradients can be verified against finite differences without float32
noise dominating the comparison. Every operation preserves the dtype of
its inputs.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy import special as _special

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Suspend graph recording (for evaluation / prediction passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional array node in the differentiation graph.

    Leaves created by the user (inputs, parameters) own a ``grad`` slot;
    interior nodes keep references to their parents plus a closure that
    maps the output cotangent to parent cotangents.
    """

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = ""

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self, cotangent=None):
        backward(self, cotangent)

    def __repr__(self):
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, op={self._op or 'leaf'})"

    # arithmetic sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)


class Parameter(Tensor):
    """Learnable leaf tensor. ``name`` is filled in with the module path."""

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward_fn, op):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss, cotangent=None, parameters=None):
    """Propagate gradients from ``loss`` into every reachable leaf.

    Without an explicit cotangent the loss must be scalar. Leaves that
    are listed in ``parameters`` but unreachable from ``loss`` receive a
    zero gradient, so optimizer steps see a full gradient set.
    """
    if cotangent is None:
        if loss.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {loss.shape}; "
                "pass an explicit cotangent to differentiate a non-scalar"
            )
        cot = np.ones_like(loss.data)
    else:
        cot = np.asarray(cotangent, dtype=loss.data.dtype)
        if cot.shape != loss.data.shape:
            raise ValueError(f"cotangent shape {cot.shape} != loss shape {loss.shape}")

    # iterative post-order traversal; recursion depth would be fragile here
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): cot}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg

    if parameters is not None:
        for p in parameters:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# ----------------------------------------------------------------------
# elementwise
# ----------------------------------------------------------------------

def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(data, (a, b), back, "add")


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(data, (a, b), back, "sub")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = a.data * b.data

    def back(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), back, "mul")


def div(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = a.data / b.data

    def back(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), back, "div")


def neg(a):
    def back(g):
        return (-g,)

    return _make(-a.data, (a,), back, "neg")


def minimum(a, b):
    """Elementwise min; ties split the gradient evenly."""
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    data = np.minimum(a.data, b.data)

    def back(g):
        lt = a.data < b.data
        gt = a.data > b.data
        eq = ~lt & ~gt
        half = np.asarray(0.5, dtype=g.dtype)
        ga = g * (lt + eq * half)
        gb = g * (gt + eq * half)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), back, "minimum")


def relu(a):
    mask = a.data > 0
    data = a.data * mask

    def back(g):
        return (g * mask,)

    return _make(data, (a,), back, "relu")


def tanh(a):
    data = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - data * data),)

    return _make(data, (a,), back, "tanh")


def sigmoid(a):
    data = _special.expit(a.data)

    def back(g):
        return (g * data * (1.0 - data),)

    return _make(data, (a,), back, "sigmoid")


def gelu(a):
    """Exact Gaussian-error-linear unit x * Phi(x)."""
    x = a.data
    cdf = 0.5 * (1.0 + _special.erf(x / np.sqrt(2.0)))
    data = (x * cdf).astype(x.dtype)

    def back(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return ((g * (cdf + x * pdf)).astype(x.dtype),)

    return _make(data, (a,), back, "gelu")


# ----------------------------------------------------------------------
# reductions and shape ops
# ----------------------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(data, (a,), back, "sum")


def tmean(a, axis=None, keepdims=False):
    data = a.data.mean(axis=axis, keepdims=keepdims)
    scale = a.data.size / data.size

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape) / scale,)

    return _make(data, (a,), back, "mean")


def reshape(a, shape):
    data = a.data.reshape(shape)

    def back(g):
        return (g.reshape(a.data.shape),)

    return _make(data, (a,), back, "reshape")


def permute(a, axes):
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def back(g):
        return (np.transpose(g, inverse),)

    return _make(data, (a,), back, "permute")


def flip(a, axis):
    data = np.flip(a.data, axis=axis)

    def back(g):
        return (np.flip(g, axis=axis),)

    return _make(data, (a,), back, "flip")


def concat(tensors, axis=0):
    tensors = [t for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(data, tuple(tensors), back, "concat")


def cumsum(a, axis):
    data = np.cumsum(a.data, axis=axis)

    def back(g):
        return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

    return _make(data, (a,), back, "cumsum")


def cyclic_roll(a, shift, axis):
    """Circular shift; rolling by the axis extent (or 0) is the identity."""
    data = np.roll(a.data, shift, axis=axis)

    def back(g):
        if isinstance(shift, tuple):
            inv = tuple(-s for s in shift)
        else:
            inv = -shift
        return (np.roll(g, inv, axis=axis),)

    return _make(data, (a,), back, "cyclic_roll")


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def back(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(data, (a,), back, "narrow")


def take_rows(table, indices):
    """Row lookup ``table[indices]`` for a 2-D table (embedding-style gather)."""
    indices = np.asarray(indices, dtype=np.int64)
    data = table.data[indices]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, indices, g)
        return (gt,)

    return _make(data, (table,), back, "take_rows")


def _pad_axis(a, axis, before, after, mode):
    n = a.data.shape[axis]
    if mode == "zero":
        pad_width = [(0, 0)] * a.data.ndim
        pad_width[axis] = (before, after)
        data = np.pad(a.data, pad_width)

        def back(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(before, before + n)
            return (g[tuple(idx)],)

        return _make(data, (a,), back, "pad_zero")

    if mode == "reflect":
        if before >= n or after >= n:
            raise ValueError(f"reflect padding ({before},{after}) exceeds extent {n}")
        src = np.pad(np.arange(n), (before, after), mode="reflect")
        data = np.take(a.data, src, axis=axis)

        def back(g):
            gx = np.zeros_like(a.data)
            moved = np.moveaxis(gx, axis, 0)
            np.add.at(moved, src, np.moveaxis(g, axis, 0))
            return (gx,)

        return _make(data, (a,), back, "pad_reflect")

    raise ValueError(f"unknown padding mode {mode!r}")


def pad_hw(a, pads, mode="zero", axes=(-2, -1)):
    """Pad the two spatial axes by (top, bottom, left, right)."""
    top, bottom, left, right = pads
    out = a
    if top or bottom:
        out = _pad_axis(out, axes[0] % a.data.ndim, top, bottom, mode)
    if left or right:
        out = _pad_axis(out, axes[1] % a.data.ndim, left, right, mode)
    return out


def crop_hw(a, top, left, height, width, axes=(-2, -1)):
    """Take a spatial window; inverse of :func:`pad_hw` for matching sizes."""
    out = narrow(a, axes[0] % a.data.ndim, top, height)
    out = narrow(out, axes[1] % a.data.ndim, left, width)
    return out


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------

def matmul(a, b):
    """Batched matrix product. Both operands must have ndim >= 2."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul needs 2-D or higher operands, got {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(data, (a, b), back, "matmul")


def linear(x, weight, bias=None):
    """Affine map over the last axis: y[..., o] = x[..., i] w[o, i] + b[o]."""
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ValueError(
            f"linear: input features {x.data.shape} do not match weight {weight.data.shape}"
        )
    data = np.matmul(x.data, weight.data.T)
    if bias is not None:
        data = data + bias.data

    def back(g):
        gx = np.matmul(g, weight.data)
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.data.shape[-1])
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(data, parents, back, "linear")


# ----------------------------------------------------------------------
# convolution and sampling
# ----------------------------------------------------------------------

def conv2d(x, weight, bias=None, stride=1, padding=None):
    """2-D cross-correlation over NCHW input.

    ``padding=None`` selects "same" padding for stride 1 (odd kernels
    only); an integer pads both spatial axes symmetrically. Output
    extents follow (H + 2p - kh) // stride + 1.
    """
    B, C, H, W = x.data.shape
    O, Cw, kh, kw = weight.data.shape
    if C != Cw:
        raise ValueError(
            f"conv2d: input has {C} channels (shape {x.data.shape}) but weight "
            f"expects {Cw} (shape {weight.data.shape})"
        )
    if padding is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same padding needs odd kernel extents")
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    else:
        ph = pw = int(padding)
    s = int(stride)
    Ho = (H + 2 * ph - kh) // s + 1
    Wo = (W + 2 * pw - kw) // s + 1
    if Ho <= 0 or Wo <= 0:
        raise ValueError(f"conv2d: kernel ({kh}x{kw}) does not fit input {H}x{W} with padding {ph}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((B, O, Ho, Wo), dtype=x.data.dtype)
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, :, u:u + s * Ho:s, v:v + s * Wo:s]
            # [O,C] @ [B,C,L] -> [B,O,L]
            out += np.matmul(weight.data[:, :, u, v], patch.reshape(B, C, -1)).reshape(B, O, Ho, Wo)
    if bias is not None:
        out += bias.data.reshape(1, O, 1, 1)

    def back(g):
        gflat = g.reshape(B, O, -1)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(weight.data)
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, :, u:u + s * Ho:s, v:v + s * Wo:s].reshape(B, C, -1)
                gw[:, :, u, v] = np.einsum("bol,bcl->oc", gflat, patch)
                gpatch = np.matmul(weight.data[:, :, u, v].T, gflat)  # [B,C,L]
                gxp[:, :, u:u + s * Ho:s, v:v + s * Wo:s] += gpatch.reshape(B, C, Ho, Wo)
        gx = gxp[:, :, ph:ph + H, pw:pw + W]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, back, "conv2d")


def max_pool2d(x, kernel, stride=None, padding=0, pad_value=0.0):
    """Max pool over NCHW input.

    Padding inserts ``pad_value`` (default 0, so out-of-image area acts
    as empty background for mask morphology). Gradient flows to the
    first maximal element of each window.
    """
    kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
    if stride is None:
        stride = (kh, kw)
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    B, C, H, W = x.data.shape
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=pad_value)

    stacked = np.stack([
        xp[:, :, u:u + sh * Ho:sh, v:v + sw * Wo:sw]
        for u in range(kh) for v in range(kw)
    ])  # [kh*kw, B, C, Ho, Wo]
    arg = np.argmax(stacked, axis=0)
    data = np.max(stacked, axis=0)

    def back(g):
        gxp = np.zeros_like(xp)
        for k in range(kh * kw):
            u, v = divmod(k, kw)
            mask = (arg == k)
            gxp[:, :, u:u + sh * Ho:sh, v:v + sw * Wo:sw] += g * mask
        return (gxp[:, :, ph:ph + H, pw:pw + W],)

    return _make(data, (x,), back, "max_pool2d")


def upsample_nearest2x(x):
    """Nearest-neighbor x2 upsampling of NCHW input."""
    data = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)

    def back(g):
        B, C, H2, W2 = g.shape
        return (g.reshape(B, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5)),)

    return _make(data, (x,), back, "upsample_nearest2x")


def bilinear_sample(feature, coords):
    """Sample ``feature`` [B,C,H,W] at fractional ``coords`` [B,2,K,Ho,Wo].

    ``coords[:, 0]`` are y positions, ``coords[:, 1]`` x positions, in
    pixel units. Values outside the image read a zero border, so both
    the value and its coordinate gradient fade smoothly to zero as a
    sample point leaves the image. Differentiable in the feature values
    and in the coordinates.
    """
    B, C, H, W = feature.data.shape
    if coords.data.shape[0] != B or coords.data.shape[1] != 2:
        raise ValueError(f"coords must be [B,2,K,Ho,Wo], got {coords.data.shape}")
    y = coords.data[:, 0]
    x = coords.data[:, 1]
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    ty = (y - y0).astype(feature.data.dtype)
    tx = (x - x0).astype(feature.data.dtype)

    corners = ((y0, x0, (1 - ty) * (1 - tx)),
               (y0, x0 + 1, (1 - ty) * tx),
               (y0 + 1, x0, ty * (1 - tx)),
               (y0 + 1, x0 + 1, ty * tx))

    flat = feature.data.reshape(B, C, H * W)
    n = y.size // B

    def gather(yi, xi):
        inside = (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W)
        lin = (np.clip(yi, 0, H - 1) * W + np.clip(xi, 0, W - 1)).reshape(B, 1, n)
        vals = np.take_along_axis(flat, np.broadcast_to(lin, (B, C, n)), axis=2)
        return vals.reshape((B, C) + y.shape[1:]), inside

    out = np.zeros((B, C) + y.shape[1:], dtype=feature.data.dtype)
    gathered = []
    for yi, xi, w in corners:
        vals, inside = gather(yi, xi)
        vals = vals * inside[:, None]
        gathered.append((vals, inside, yi, xi))
        out += vals * w[:, None]

    def back(g):
        gfeat = np.zeros((B * C, H * W), dtype=feature.data.dtype)
        rows = np.arange(B * C)[:, None]
        gty = np.zeros_like(ty)
        gtx = np.zeros_like(tx)
        dw = ((-(1 - tx), -(1 - ty)),
              (-tx, (1 - ty)),
              ((1 - tx), -ty),
              (tx, ty))
        for (vals, inside, yi, xi), (dwy, dwx), (_, _, w) in zip(gathered, dw, corners):
            contrib = (g * w[:, None]) * inside[:, None]
            lin = (np.clip(yi, 0, H - 1) * W + np.clip(xi, 0, W - 1))
            lin_bc = np.broadcast_to(lin.reshape(B, 1, n), (B, C, n)).reshape(B * C, n)
            np.add.at(gfeat, (rows, lin_bc), contrib.reshape(B * C, n))
            gv = (g * vals).sum(axis=1)  # reduce channels
            gty += gv * dwy
            gtx += gv * dwx
        gcoords = np.stack([gty, gtx], axis=1)
        return gfeat.reshape(B, C, H, W), gcoords

    return _make(out, (feature, coords), back, "bilinear_sample")


# ----------------------------------------------------------------------
# normalization and attention support
# ----------------------------------------------------------------------

def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    C = x.data.shape[-1]
    if C == 0:
        raise ValueError("layer_norm: channel axis has zero extent")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = gamma.data * xhat + beta.data

    def back(g):
        ggamma = (g * xhat).reshape(-1, C).sum(axis=0)
        gbeta = g.reshape(-1, C).sum(axis=0)
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx.astype(x.data.dtype), ggamma, gbeta

    return _make(data, (x, gamma, beta), back, "layer_norm")


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _make(data, (x,), back, "softmax")
