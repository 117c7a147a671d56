"""Stage schedules and parameter budgets of the two encoder variants.

Run:  python3 demos/04_model_shapes.py
"""

import numpy as np

from octaseg.autodiff import Tensor, no_grad
from octaseg.network import (ArchitectureConfig, LIGHTWEIGHT_CONFIG, build_model,
                             count_parameters)

# --- channel / extent schedule ----------------------------------------------

for variant in ("dual", "alt"):
    cfg = ArchitectureConfig(variant=variant, init_channels=12, depth=3)
    model = build_model(cfg, seed=0)
    x = Tensor(np.random.default_rng(0).random((1, 3, 64, 64), dtype=np.float32))
    with no_grad():
        skips = model.encoder(x)
        out = model(x)
    print(f"{variant}-branch encoder on 64x64 input:")
    for k, skip in enumerate(skips):
        print(f"  stage {k}: {tuple(skip.shape)}  "
              f"(extents /{2 ** (k + 1)}, channels x{2 ** k})")
    print(f"  decoder output: {tuple(out.shape)}  "
          f"range [{out.data.min():.3f}, {out.data.max():.3f}]\n")

# --- parameter budgets --------------------------------------------------------

print("parameter counts:")
for label, cfg in [
    ("dual, published width (72)", ArchitectureConfig(variant="dual")),
    ("alternating, published width (108)", ArchitectureConfig(variant="alt")),
    ("lightweight (~170k)", LIGHTWEIGHT_CONFIG),
]:
    model = build_model(cfg, seed=0)
    print(f"  {label:<38} {count_parameters(model):>12,}")

print("\nthe lightweight config is dual-branch, init_channels="
      f"{LIGHTWEIGHT_CONFIG.init_channels}, depth={LIGHTWEIGHT_CONFIG.depth}, "
      f"kernel_points={LIGHTWEIGHT_CONFIG.dsconv_kernel_points}")
