"""Overlap metrics and per-split metric reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _binarize(mask):
    return np.asarray(mask) > 0.5


def dice_score(pred, target) -> float:
    """2|A n B| / (|A| + |B|); two empty masks count as a perfect match."""
    a = _binarize(pred)
    b = _binarize(target)
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / total)


def jaccard_score(pred, target) -> float:
    """|A n B| / |A u B|; two empty masks count as a perfect match."""
    a = _binarize(pred)
    b = _binarize(target)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


@dataclass
class MetricsReport:
    """Per-sample and mean Dice / Jaccard / loss values for one split."""

    split: str
    task: str
    epoch: int | None = None
    sample_ids: list = field(default_factory=list)
    dice: list = field(default_factory=list)
    jaccard: list = field(default_factory=list)
    loss: list = field(default_factory=list)

    def add(self, sample_id, dice, jaccard, loss):
        self.sample_ids.append(sample_id)
        self.dice.append(float(dice))
        self.jaccard.append(float(jaccard))
        self.loss.append(float(loss))

    @property
    def mean_dice(self):
        return float(np.mean(self.dice)) if self.dice else float("nan")

    @property
    def mean_jaccard(self):
        return float(np.mean(self.jaccard)) if self.jaccard else float("nan")

    @property
    def mean_loss(self):
        return float(np.mean(self.loss)) if self.loss else float("nan")

    def write_csv(self, path):
        """One row per sample plus a final mean row."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "split", "task", "dice", "jaccard", "loss"])
            for sid, d, j, l in zip(self.sample_ids, self.dice, self.jaccard, self.loss):
                writer.writerow([sid, self.split, self.task, f"{d:.6f}", f"{j:.6f}", f"{l:.6f}"])
            writer.writerow(["mean", self.split, self.task,
                             f"{self.mean_dice:.6f}", f"{self.mean_jaccard:.6f}",
                             f"{self.mean_loss:.6f}"])
        return path
