"""How the snake kernel bends: offsets, accumulated positions, degeneration.

Run:  python3 demos/02_snake_convolution.py
"""

import numpy as np

from octaseg import autodiff as ad
from octaseg.autodiff import Tensor
from octaseg.dsconv import SnakeConv2d, accumulate_positions
from octaseg.network import init_parameters

K = 7
H = W = 15

# --- positions under zero offsets: a rigid horizontal line -----------------

zero = Tensor(np.zeros((1, K - 1, H, W), dtype=np.float32))
coords = accumulate_positions(zero, "x", K).data
print("x-axis sample points at pixel (7, 7), zero offsets:")
print("  y:", coords[0, 0, :, 7, 7], "\n  x:", coords[0, 1, :, 7, 7])

# --- constant +0.4 per-step offsets accumulate outward from the center -----

const = Tensor(np.full((1, K - 1, H, W), 0.4, dtype=np.float32))
coords = accumulate_positions(const, "x", K).data
print("\nsame point with every per-step offset = +0.4:")
print("  y:", coords[0, 0, :, 7, 7])
print("(displacement grows 0.4, 0.8, 1.2 outward on each side; center fixed)")

# --- a trained-from-zero predictor starts exactly rigid --------------------

snake = SnakeConv2d(1, 1, axis="x", kernel_points=K)
init_parameters(snake, 0)
rng = np.random.default_rng(3)
feature = rng.random((1, 1, H, W), dtype=np.float32)
out = snake(Tensor(feature)).data
rigid = ad.conv2d(Tensor(feature),
                  Tensor(snake.weight.data[:, :, None, :]), snake.bias).data
print(f"\nzero-init snake vs rigid 1x{K} conv: max difference "
      f"{np.abs(out - rigid).max():.2e}")

# --- after nudging the offset predictor the kernel follows the feature -----

snake.offset_conv.weight.data = rng.uniform(
    -0.5, 0.5, snake.offset_conv.weight.shape).astype(np.float32)
offsets = snake.predict_offsets(Tensor(feature)).data
print(f"with a random offset predictor: offsets span "
      f"[{offsets.min():+.3f}, {offsets.max():+.3f}] (always inside (-1, 1))")
