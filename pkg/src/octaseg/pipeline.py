"""Training loop, evaluation, and prediction output.

Training follows a fixed recipe: AdamW over shuffled mini-batches with a
linear learning-rate warm-up, validation metrics and a checkpoint every
``eval_every`` epochs, and the checkpoint with the lowest validation
loss reported as the result. Every random draw (shuffling, augmentation)
derives from the configured seed, so equal seeds reproduce equal runs
bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import augment as aug
from .autodiff import Tensor, backward, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import SkeletonConfig, cl_dice_loss
from .metrics import MetricsReport, dice_score, jaccard_score
from .network import ArchitectureConfig, SegmentationModel, build_model
from .optim import AdamW, lr_schedule

LOG_COLUMNS = ["epoch", "split", "loss", "dice", "jaccard", "lr"]


@dataclass
class TrainConfig:
    epochs: int = 100
    eval_every: int = 10
    lr_start: float = 1e-4
    lr_peak: float = 1e-2
    warmup_epochs: int = 10
    batch_size: int = 2
    weight_decay: float = 1e-2
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    skeleton_iters: int = 10
    augment: bool = True


@dataclass
class TrainResult:
    history: list = field(default_factory=list)      # rows of LOG_COLUMNS values
    reports: list = field(default_factory=list)      # validation MetricsReport per eval
    best_epoch: int | None = None
    best_val_loss: float = float("inf")
    best_checkpoint: Path | None = None
    stopped_epoch: int | None = None

    def loss_curve(self, split="train"):
        return [(row[0], row[2]) for row in self.history if row[1] == split]


def _collate(samples):
    images = np.stack([s.image for s in samples])
    targets = np.stack([s.target for s in samples])
    return images.astype(np.float32), targets.astype(np.float32)


def _append_log(path, rows):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow(row)


def train(model: SegmentationModel, cfg: TrainConfig, train_samples, val_samples,
          out_dir, stop_at_train_dice=None) -> TrainResult:
    """Optimize ``model`` in place and return the training record.

    ``stop_at_train_dice`` lets desk-scale harnesses stop once the
    training set is fit; a final validation pass and checkpoint are
    still recorded in that case.
    """
    if not train_samples or not val_samples:
        raise ValueError("train() needs non-empty train and validation splits")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.csv"
    skel = SkeletonConfig(cfg.skeleton_iters)

    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr_peak, betas=cfg.betas,
                weight_decay=cfg.weight_decay)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    result = TrainResult()
    task = train_samples[0].task

    def run_validation(epoch_num):
        report = evaluate(model, val_samples, skeleton_iters=cfg.skeleton_iters,
                          split="val", task=task, epoch=epoch_num)
        result.reports.append(report)
        row = [epoch_num, "val", report.mean_loss, report.mean_dice,
               report.mean_jaccard, lr]
        result.history.append(row)
        _append_log(log_path, [row])
        ckpt_dir = save_checkpoint(model, out_dir / "checkpoints" / f"epoch_{epoch_num:04d}")
        if report.mean_loss < result.best_val_loss:
            result.best_val_loss = report.mean_loss
            result.best_epoch = epoch_num
            result.best_checkpoint = ckpt_dir
        return report

    for epoch in range(cfg.epochs):
        epoch_num = epoch + 1
        lr = lr_schedule(epoch, cfg.lr_start, cfg.lr_peak, cfg.warmup_epochs)
        order = shuffle_rng.permutation(len(train_samples))
        losses = []
        dices = []
        jacs = []
        for start in range(0, len(order), cfg.batch_size):
            batch_idx = order[start:start + cfg.batch_size]
            batch = []
            for i in batch_idx:
                s = train_samples[i]
                if cfg.augment:
                    s = aug.augment(s, aug.sample_rng(cfg.seed, epoch, int(i)))
                batch.append(s)
            images, targets = _collate(batch)
            pred = model(Tensor(images))
            loss = cl_dice_loss(pred, Tensor(targets), skel)
            if not np.isfinite(loss.data):
                raise RuntimeError(
                    f"non-finite loss {float(loss.data)} at epoch {epoch_num}, "
                    f"step {start // cfg.batch_size}")
            model.zero_grad()
            backward(loss, parameters=params)
            opt.step(lr=lr)
            losses.append(float(loss.data))
            for b in range(len(batch)):
                dices.append(dice_score(pred.data[b, 0], targets[b, 0]))
                jacs.append(jaccard_score(pred.data[b, 0], targets[b, 0]))

        row = [epoch_num, "train", float(np.mean(losses)), float(np.mean(dices)),
               float(np.mean(jacs)), lr]
        result.history.append(row)
        _append_log(log_path, [row])

        evaluated = False
        if epoch_num % cfg.eval_every == 0:
            run_validation(epoch_num)
            evaluated = True

        if stop_at_train_dice is not None and np.mean(dices) >= stop_at_train_dice:
            result.stopped_epoch = epoch_num
            if not evaluated:
                run_validation(epoch_num)
            break

    # a run shorter than eval_every would otherwise end without any
    # recorded validation or checkpoint
    if result.best_epoch is None and result.history:
        run_validation(result.history[-1][0])
    return result


def evaluate(model: SegmentationModel, samples, skeleton_iters=10, split="test",
             task=None, epoch=None, csv_path=None) -> MetricsReport:
    """Per-sample Dice/Jaccard at threshold 0.5 plus the training loss value."""
    if not samples:
        raise ValueError("evaluate() needs a non-empty split")
    task = task or samples[0].task
    report = MetricsReport(split=split, task=task, epoch=epoch)
    skel = SkeletonConfig(skeleton_iters)
    with no_grad():
        for s in samples:
            pred = model(Tensor(s.image[None]))
            loss = cl_dice_loss(pred, Tensor(s.target[None]), skel)
            report.add(s.id,
                       dice_score(pred.data[0, 0], s.target[0]),
                       jaccard_score(pred.data[0, 0], s.target[0]),
                       float(loss.data))
    if csv_path is not None:
        report.write_csv(csv_path)
    return report


def evaluate_checkpoint(arch: ArchitectureConfig, checkpoint_dir, samples,
                        **kwargs) -> MetricsReport:
    model = build_model(arch, seed=0)
    load_checkpoint(model, checkpoint_dir)
    return evaluate(model, samples, **kwargs)


# ----------------------------------------------------------------------
# prediction output
# ----------------------------------------------------------------------

def binary_erode_cross(mask: np.ndarray) -> np.ndarray:
    """Integer erosion with the 4-neighborhood cross, zero border."""
    m = mask.astype(bool)
    padded = np.pad(m, 1)
    return (m
            & padded[:-2, 1:-1] & padded[2:, 1:-1]
            & padded[1:-1, :-2] & padded[1:-1, 2:])


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Boundary pixels: mask XOR its erosion."""
    m = mask.astype(bool)
    return m ^ binary_erode_cross(m)


def predict(model: SegmentationModel, records, out_dir, threshold=0.5):
    """Write a binary mask PNG and an RGB overlay per record.

    The overlay paints the predicted boundary red over the first (full
    projection) channel; when the record carries a target, its boundary
    is painted blue. A failing record is reported and skipped, the rest
    of the batch continues.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    errors = []
    for record in records:
        try:
            with no_grad():
                prob = model(Tensor(record.image[None])).data[0, 0]
            mask = prob >= threshold
            mask_img = (mask.astype(np.uint8)) * 255
            mask_path = out_dir / f"{record.id}_mask.png"
            Image.fromarray(mask_img, mode="L").save(mask_path)

            base = (np.clip(record.image[0], 0.0, 1.0) * 255).astype(np.uint8)
            overlay = np.stack([base, base, base], axis=-1)
            overlay[mask_boundary(mask)] = (255, 0, 0)
            if record.target is not None:
                overlay[mask_boundary(record.target[0] > 0.5)] = (0, 0, 255)
            overlay_path = out_dir / f"{record.id}_overlay.png"
            Image.fromarray(overlay, mode="RGB").save(overlay_path)
            written.append((mask_path, overlay_path))
        except Exception as exc:  # per-file failure must not kill the batch
            errors.append((record.id, str(exc)))
    return written, errors
