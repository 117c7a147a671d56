"""Training loop behavior, evaluation reports, prediction artifacts."""

import hashlib

import numpy as np
import pytest
from PIL import Image

from octaseg.autodiff import Tensor
from octaseg.data import synthetic_vessel_samples
from octaseg.metrics import dice_score
from octaseg.network import ArchitectureConfig, build_model
from octaseg.pipeline import (TrainConfig, binary_erode_cross, evaluate,
                              mask_boundary, predict, train)

TINY_ARCH = ArchitectureConfig(variant="dual", init_channels=8, depth=1,
                               dsconv_kernel_points=3, window=4)


def tiny_samples(n=4):
    return synthetic_vessel_samples(n, size=16, seed=5)


def tiny_train_cfg(**overrides):
    base = dict(epochs=3, eval_every=2, batch_size=2, seed=11,
                warmup_epochs=2, skeleton_iters=2, augment=False)
    base.update(overrides)
    return TrainConfig(**base)


class EchoModel:
    """Stand-in model returning a fixed map regardless of input."""

    def __init__(self, value_fn):
        self.value_fn = value_fn

    def __call__(self, x):
        B, _, H, W = x.shape
        return Tensor(self.value_fn(B, H, W))


class TestTrain:
    def test_validation_recorded_at_eval_every_multiples(self, tmp_path):
        samples = tiny_samples()
        model = build_model(TINY_ARCH, seed=0)
        cfg = tiny_train_cfg(epochs=6, eval_every=2)
        result = train(model, cfg, samples, samples, tmp_path / "run")
        val_epochs = [row[0] for row in result.history if row[1] == "val"]
        assert val_epochs == [2, 4, 6]
        assert result.best_epoch in val_epochs
        assert result.best_checkpoint is not None
        assert (result.best_checkpoint / "manifest.txt").is_file()

    def test_equal_seeds_identical_loss_curves(self, tmp_path):
        samples = tiny_samples()
        curves = []
        for run in range(2):
            model = build_model(TINY_ARCH, seed=4)
            result = train(model, tiny_train_cfg(), samples, samples,
                           tmp_path / f"run{run}")
            curves.append(result.loss_curve("train"))
        assert curves[0] == curves[1]

    def test_training_log_csv_written(self, tmp_path):
        samples = tiny_samples()
        model = build_model(TINY_ARCH, seed=0)
        train(model, tiny_train_cfg(epochs=2, eval_every=2), samples, samples,
              tmp_path / "run")
        text = (tmp_path / "run" / "train_log.csv").read_text().splitlines()
        assert text[0] == "epoch,split,loss,dice,jaccard,lr"
        assert len(text) == 1 + 2 + 1  # header + 2 train rows + 1 val row

    def test_empty_split_rejected(self, tmp_path):
        model = build_model(TINY_ARCH, seed=0)
        with pytest.raises(ValueError, match="non-empty"):
            train(model, tiny_train_cfg(), [], tiny_samples(), tmp_path)

    def test_early_stop_records_final_validation(self, tmp_path):
        samples = tiny_samples()
        model = build_model(TINY_ARCH, seed=0)
        cfg = tiny_train_cfg(epochs=50, eval_every=50)
        result = train(model, cfg, samples, samples, tmp_path / "run",
                       stop_at_train_dice=0.0)  # stops after first epoch
        assert result.stopped_epoch == 1
        assert [row[0] for row in result.history if row[1] == "val"] == [1]


class TestEvaluate:
    def test_target_as_prediction_scores_one(self):
        samples = tiny_samples(3)
        queue = [s.target[None] for s in samples]
        model = EchoModel(lambda B, H, W: queue.pop(0))
        report = evaluate(model, samples, skeleton_iters=2)
        assert report.mean_dice == 1.0
        assert report.mean_jaccard == 1.0

    def test_all_zero_prediction_scores_zero(self):
        samples = tiny_samples(2)
        model = EchoModel(lambda B, H, W: np.zeros((B, 1, H, W), dtype=np.float32))
        report = evaluate(model, samples, skeleton_iters=2)
        assert report.mean_dice == 0.0

    def test_csv_has_sample_rows_plus_mean(self, tmp_path):
        samples = tiny_samples(3)
        model = build_model(TINY_ARCH, seed=0)
        report = evaluate(model, samples, skeleton_iters=2,
                          csv_path=tmp_path / "m.csv")
        rows = (tmp_path / "m.csv").read_text().splitlines()
        assert len(rows) == 1 + 3 + 1

    def test_evaluate_does_not_touch_parameters(self):
        samples = tiny_samples(2)
        model = build_model(TINY_ARCH, seed=0)

        def digest():
            h = hashlib.sha256()
            for _, p in model.named_parameters():
                h.update(p.data.tobytes())
            return h.hexdigest()

        before = digest()
        evaluate(model, samples, skeleton_iters=2)
        assert digest() == before

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            evaluate(build_model(TINY_ARCH, seed=0), [])


class TestPredict:
    def test_mask_png_is_binary_and_overlay_matches_extents(self, tmp_path):
        samples = tiny_samples(2)
        model = build_model(TINY_ARCH, seed=0)
        written, errors = predict(model, samples, tmp_path / "out")
        assert errors == []
        assert len(written) == 2
        for mask_path, overlay_path in written:
            mask = np.asarray(Image.open(mask_path))
            assert set(np.unique(mask)) <= {0, 255}
            overlay = np.asarray(Image.open(overlay_path))
            assert overlay.shape == (16, 16, 3)

    def test_boundary_is_mask_xor_erosion(self, rng):
        mask = rng.random((12, 12)) > 0.6

        def erode_oracle(m):
            out = np.zeros_like(m)
            H, W = m.shape
            for i in range(H):
                for j in range(W):
                    vals = [m[i, j]]
                    vals.append(m[i - 1, j] if i > 0 else False)
                    vals.append(m[i + 1, j] if i < H - 1 else False)
                    vals.append(m[i, j - 1] if j > 0 else False)
                    vals.append(m[i, j + 1] if j < W - 1 else False)
                    out[i, j] = all(vals)
            return out

        eroded = erode_oracle(mask)
        assert np.array_equal(binary_erode_cross(mask), eroded)
        assert np.array_equal(mask_boundary(mask), mask ^ eroded)

    def test_failing_record_skipped_but_batch_continues(self, tmp_path):
        samples = tiny_samples(2)
        samples[0].image = samples[0].image[:2]  # wrong channel count
        model = build_model(TINY_ARCH, seed=0)
        written, errors = predict(model, samples, tmp_path / "out")
        assert len(written) == 1
        assert len(errors) == 1
        assert errors[0][0] == samples[0].id

    def test_records_without_target_still_render(self, tmp_path):
        samples = tiny_samples(1)
        samples[0].target = None
        model = build_model(TINY_ARCH, seed=0)
        written, errors = predict(model, samples, tmp_path / "out")
        assert errors == [] and len(written) == 1


class TestOverfitSmoke:
    def test_loss_decreases_on_tiny_problem(self, tmp_path):
        samples = tiny_samples()
        model = build_model(TINY_ARCH, seed=1)
        cfg = tiny_train_cfg(epochs=10, eval_every=10, warmup_epochs=20,
                             skeleton_iters=2)
        result = train(model, cfg, samples, samples, tmp_path / "run")
        losses = [loss for _, loss in result.loss_curve("train")]
        assert losses[-1] < losses[0]
