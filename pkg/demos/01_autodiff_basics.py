"""Tour of the autodiff core: tensors, a composed graph, gradient checking.

Run:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from octaseg import autodiff as ad
from octaseg.autodiff import Tensor, backward
from octaseg.gradcheck import check_gradients, rand64

# --- tensors record the operations applied to them -------------------------

x = Tensor(np.linspace(-2, 2, 6).reshape(2, 3), requires_grad=True)
y = (ad.tanh(x) * x).sum()
y.backward()
print("f(x) = sum(x * tanh(x))")
print("  value   :", float(y.data))
print("  gradient:\n", x.grad)

# --- a conv -> layer_norm -> softmax graph, checked against finite differences

rng = np.random.default_rng(0)
image = rand64(rng, 1, 2, 5, 5)
kernel = rand64(rng, 3, 2, 3, 3)
bias = rand64(rng, 3)
gamma = rand64(rng, 3, lo=0.5, hi=1.5)
beta = rand64(rng, 3)
mix = Tensor(rng.standard_normal((1, 5, 5, 3)))


def network(image, kernel, bias, gamma, beta):
    h = ad.conv2d(image, kernel, bias)           # [1, 3, 5, 5]
    h = ad.permute(h, (0, 2, 3, 1))              # channels-last for the norm
    h = ad.layer_norm(h, gamma, beta)
    return (ad.softmax(h, axis=-1) * mix).sum()


err = check_gradients(network, [image, kernel, bias, gamma, beta])
print(f"\ncomposed graph gradient check: worst relative error {err:.2e} (tol 1e-3)")

# --- the zero border of bilinear sampling ----------------------------------

feature = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
coords = Tensor(np.array([1.5, -0.5, 1.5, -0.5]).reshape(1, 2, 1, 1, 2))
sampled = ad.bilinear_sample(feature, coords)
print("\nbilinear sample at (1.5, 1.5) and (-0.5, -0.5):", sampled.data.ravel())
print("(the second point straddles the border, so it blends toward zero)")
