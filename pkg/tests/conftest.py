import numpy as np
import pytest
from PIL import Image

from octaseg.data import LAYERS


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


@pytest.fixture
def mini_dataset(tmp_path):
    """Fabricate a tiny dataset tree in the canonical layout (3m subset).

    IDs 10301, 10302 (train), 10441 (val), 10451 (test), 16x16 pixels.
    """
    root = tmp_path / "octa"
    rng = np.random.default_rng(0)
    ids = [10301, 10302, 10441, 10451]
    for sample_id in ids:
        for layer in LAYERS:
            img = rng.integers(0, 256, size=(16, 16))
            write_png(root / "3m" / "projections" / layer / f"{sample_id}.png", img)
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:12, 6:10] = 255
        write_png(root / "3m" / "labels" / "rv" / f"{sample_id}.png", mask)
    return root
