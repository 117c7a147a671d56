"""Overlap metrics and report formatting."""

import csv

import numpy as np

from octaseg.metrics import MetricsReport, dice_score, jaccard_score


class TestScores:
    def test_identical_masks(self, rng):
        m = rng.random((8, 8)) > 0.5
        assert dice_score(m, m) == 1.0
        assert jaccard_score(m, m) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        a[:2] = 1
        b[2:] = 1
        assert dice_score(a, b) == 0.0
        assert jaccard_score(a, b) == 0.0

    def test_hand_counted_overlap(self):
        # |A| = |B| = 4, overlap 2: dice 0.5, jaccard 1/3
        a = np.zeros(8)
        b = np.zeros(8)
        a[:4] = 1
        b[2:6] = 1
        d = dice_score(a, b)
        j = jaccard_score(a, b)
        assert d == 0.5
        assert np.isclose(j, 1.0 / 3.0)
        assert np.isclose(j, d / (2.0 - d))

    def test_both_empty_convention(self):
        z = np.zeros((3, 3))
        assert dice_score(z, z) == 1.0
        assert jaccard_score(z, z) == 1.0

    def test_jaccard_dice_identity_random_pairs(self, rng):
        for _ in range(200):
            a = rng.random((6, 6)) > rng.random()
            b = rng.random((6, 6)) > rng.random()
            d = dice_score(a, b)
            j = jaccard_score(a, b)
            assert 0.0 <= d <= 1.0 and 0.0 <= j <= 1.0
            assert np.isclose(j, d / (2.0 - d), atol=1e-12)


class TestReport:
    def test_mean_is_arithmetic_mean(self):
        report = MetricsReport(split="val", task="rv")
        report.add(1, 0.5, 0.4, 0.1)
        report.add(2, 1.0, 1.0, 0.0)
        assert report.mean_dice == 0.75
        assert report.mean_jaccard == 0.7
        assert report.mean_loss == 0.05

    def test_csv_row_count_is_samples_plus_mean(self, tmp_path):
        report = MetricsReport(split="test", task="faz")
        for i in range(5):
            report.add(i, 0.9, 0.8, 0.1)
        path = report.write_csv(tmp_path / "metrics.csv")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 5 + 1  # header + samples + mean
        assert rows[-1][0] == "mean"
