"""AdamW optimizer and the warm-up learning-rate schedule."""

from __future__ import annotations

import numpy as np


class AdamW:
    """Adam with decoupled weight decay.

    Moments are kept in the parameter dtype; the learning rate is passed
    per step so a schedule can drive it.
    """

    def __init__(self, parameters, lr=1e-2, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-2):
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.parameters]
        self._v = [np.zeros_like(p.data) for p in self.parameters]

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.parameters, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                            + self.weight_decay * p.data)


def lr_schedule(epoch: int, lr_start=1e-4, lr_peak=1e-2, warmup_epochs=10) -> float:
    """Linear ramp from lr_start to lr_peak over the warm-up, then flat."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch >= warmup_epochs:
        return lr_peak
    return lr_start + (lr_peak - lr_start) * (epoch / warmup_epochs)
