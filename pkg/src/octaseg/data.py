"""Dataset ingestion for en-face OCTA projection stacks.

Canonical on-disk layout (8-bit grayscale PNG throughout)::

    root/<subset>/projections/<layer>/<id>.png
    root/<subset>/labels/<task>/<id>.png

with subset in {3m, 6m}, layer in {FULL, ILM_OPL, OPL_BM} and task in
{rv, faz, capillary, artery, vein}. Releases of the source dataset vary
in naming; reorganize once into this layout rather than relying on
auto-detection (see README).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

LAYERS = ("FULL", "ILM_OPL", "OPL_BM")
TASKS = ("rv", "faz", "capillary", "artery", "vein")
SUBSETS = ("3m", "6m")

# Published sample-ID split ranges, inclusive. The 6m validation range
# ends at 10200, so the test range starts at 10201 to keep the splits
# disjoint and the subset at its documented 300 samples.
ID_RANGES = {
    "3m": {"train": (10301, 10440), "val": (10441, 10450), "test": (10451, 10500)},
    "6m": {"train": (10001, 10180), "val": (10181, 10200), "test": (10201, 10300)},
}


@dataclass
class SampleRecord:
    """One training/eval unit: 3-channel projection stack plus binary mask."""

    id: int
    image: np.ndarray            # [3, H, W] float32 in [0, 1]
    target: np.ndarray | None    # [1, H, W] float32 in {0, 1}, None if unlabeled
    task: str = "rv"


@dataclass
class PartitionSpec:
    subset: str = "3m"
    ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subset not in SUBSETS:
            raise ValueError(f"subset must be one of {SUBSETS}, got {self.subset!r}")
        if not self.ranges:
            self.ranges = dict(ID_RANGES[self.subset])

    def split_of(self, sample_id: int) -> str | None:
        hits = [name for name, (lo, hi) in self.ranges.items() if lo <= sample_id <= hi]
        if len(hits) > 1:
            raise ValueError(f"id {sample_id} falls in more than one split: {hits}")
        return hits[0] if hits else None

    def ids(self, split: str):
        lo, hi = self.ranges[split]
        return list(range(lo, hi + 1))

    def sizes(self):
        return {name: hi - lo + 1 for name, (lo, hi) in self.ranges.items()}


@dataclass
class DatasetSplits:
    train: list
    val: list
    test: list

    def __getitem__(self, split):
        return getattr(self, split)


def _read_gray(path: Path) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"missing image file: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def load_stack(root: Path, subset: str, sample_id: int) -> np.ndarray:
    """Read and stack the three projection layers for one sample."""
    root = Path(root)
    layers = []
    for layer in LAYERS:
        arr = _read_gray(root / subset / "projections" / layer / f"{sample_id}.png")
        layers.append(arr)
    shapes = {a.shape for a in layers}
    if len(shapes) > 1:
        raise ValueError(f"sample {sample_id}: projection layers disagree on extents {shapes}")
    return np.stack(layers).astype(np.float32) / 255.0


def load_sample(root: Path, subset: str, task: str, sample_id: int,
                require_label=True) -> SampleRecord:
    image = load_stack(root, subset, sample_id)
    label_path = Path(root) / subset / "labels" / task / f"{sample_id}.png"
    target = None
    if require_label or label_path.is_file():
        label = _read_gray(label_path)
        if label.shape != image.shape[1:]:
            raise ValueError(
                f"sample {sample_id}: label extents {label.shape} do not match "
                f"projections {image.shape[1:]}")
        target = (label > 127).astype(np.float32)[None]
    return SampleRecord(id=sample_id, image=image, target=target, task=task)


def load_dataset(root, partition: PartitionSpec, task: str) -> DatasetSplits:
    """Load every labeled sample under ``root`` into its split.

    Samples are discovered from the FULL projection directory, sorted by
    ID, and assigned by the partition ranges. IDs outside every range
    are rejected, as are empty directories.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    root = Path(root)
    full_dir = root / partition.subset / "projections" / "FULL"
    if not full_dir.is_dir():
        raise FileNotFoundError(f"no projection directory at {full_dir}")
    ids = sorted(int(p.stem) for p in full_dir.glob("*.png"))
    if not ids:
        raise ValueError(f"no samples found under {full_dir}")
    splits = DatasetSplits(train=[], val=[], test=[])
    for sample_id in ids:
        split = partition.split_of(sample_id)
        if split is None:
            raise ValueError(
                f"sample id {sample_id} does not belong to any split of subset "
                f"{partition.subset!r}")
        splits[split].append(load_sample(root, partition.subset, task, sample_id))
    return splits


# ----------------------------------------------------------------------
# procedural data for desk-scale training and tests
# ----------------------------------------------------------------------

def _draw_curve(canvas, rng):
    """Rasterize one random smooth curve with a random 1-3 px thickness."""
    size = canvas.shape[0]
    n = 200
    t = np.linspace(0.0, 1.0, n)
    # quadratic Bezier with endpoints on opposite borders
    if rng.random() < 0.5:
        p0 = np.array([rng.uniform(0, size - 1), 0.0])
        p2 = np.array([rng.uniform(0, size - 1), size - 1.0])
    else:
        p0 = np.array([0.0, rng.uniform(0, size - 1)])
        p2 = np.array([size - 1.0, rng.uniform(0, size - 1)])
    p1 = np.array([rng.uniform(0, size - 1), rng.uniform(0, size - 1)])
    pts = ((1 - t)[:, None] ** 2 * p0 + 2 * (t * (1 - t))[:, None] * p1 + t[:, None] ** 2 * p2)
    radius = rng.integers(0, 2)
    for y, x in pts:
        yi, xi = int(round(y)), int(round(x))
        canvas[max(0, yi - radius):yi + radius + 1, max(0, xi - radius):xi + radius + 1] = 1.0


def synthetic_vessel_samples(n: int, size: int = 64, seed: int = 0,
                             task: str = "rv") -> list[SampleRecord]:
    """Procedurally drawn curvilinear masks with a noisy 3-layer stack.

    The first channel mimics a full projection (mask plus texture), the
    other two are attenuated copies, so the mapping is learnable but not
    a pixel identity.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        mask = np.zeros((size, size), dtype=np.float32)
        for _ in range(rng.integers(2, 5)):
            _draw_curve(mask, rng)
        noise = rng.uniform(0.0, 0.25, size=(size, size)).astype(np.float32)
        ch0 = np.clip(0.75 * mask + noise, 0.0, 1.0)
        ch1 = np.clip(0.55 * mask + 0.5 * noise + 0.1, 0.0, 1.0)
        ch2 = np.clip(0.35 * mask + 0.3 * noise + 0.2, 0.0, 1.0)
        image = np.stack([ch0, ch1, ch2]).astype(np.float32)
        records.append(SampleRecord(id=i, image=image, target=mask[None].copy(), task=task))
    return records
