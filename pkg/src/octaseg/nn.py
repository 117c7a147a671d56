"""Minimal parameter-owning module layer on top of the autodiff core.

Modules discover their parameters by walking attributes in definition
order, which keeps initialization and checkpoint manifests deterministic
for a fixed architecture and seed.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter


class Module:
    """Base class: parameter discovery, naming, zeroing, init recursion."""

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield (f"{prefix}{key}", value)
        for key, child in self._children():
            yield from child.named_parameters(prefix=f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix=""):
        """Stamp each parameter with its attribute path."""
        for name, p in self.named_parameters(prefix):
            p.name = name

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def init(self, rng):
        """Draw fresh parameter values; children are visited in order."""
        self._init_self(rng)
        for _, child in self._children():
            child.init(rng)

    def _init_self(self, rng):
        pass

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _fan_in_uniform(rng, shape, fan_in, dtype):
    # He-style bound: keeps activation variance roughly stable through
    # stacked ReLU layers, so an untrained network neither saturates nor
    # collapses to the sigmoid midpoint
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    """2-D convolution layer; ``zero_init`` freezes the start at identity-zero
    (used so deformation offsets begin on the integer grid)."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=None,
                 bias=True, zero_init=False, dtype=np.float32):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        self.stride = stride
        self.padding = padding
        self.zero_init = zero_init
        self.dtype = dtype
        self.weight = Parameter(np.zeros((out_channels, in_channels, kh, kw), dtype=dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None

    def _init_self(self, rng):
        if self.zero_init:
            self.weight.data[...] = 0.0
        else:
            fan_in = self.in_channels * self.kernel[0] * self.kernel[1]
            self.weight.data[...] = _fan_in_uniform(rng, self.weight.data.shape, fan_in, self.dtype)
        if self.bias is not None:
            self.bias.data[...] = 0.0

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.dtype = dtype
        self.weight = Parameter(np.zeros((out_features, in_features), dtype=dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def _init_self(self, rng):
        self.weight.data[...] = _fan_in_uniform(
            rng, self.weight.data.shape, self.in_features, self.dtype)
        if self.bias is not None:
            self.bias.data[...] = 0.0

    def forward(self, x):
        return ad.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels, eps=1e-5, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))

    def _init_self(self, rng):
        self.gamma.data[...] = 1.0
        self.beta.data[...] = 0.0

    def forward(self, x):
        return ad.layer_norm(x, self.gamma, self.beta, eps=self.eps)
