import csv

import numpy as np
import pytest

from robustloss.analysis import (
    CurveTable,
    default_z_grid,
    initial_histogram,
    learning_curve,
    overlap_metric,
    write_curve_csv,
    write_histogram_csv,
)
from robustloss.errors import ConfigError
from robustloss.losses import LossSpec
from robustloss.numerics import RngStream


def _curve(kind, c, grid, n=3000, seed=30):
    return learning_curve(LossSpec.for_classes(kind, c), c, grid, n, RngStream(seed))


class TestLearningCurve:
    def test_ce_saturates_at_minus_one(self):
        table = _curve("ce", 10, np.array([-10.0]))
        assert abs(table.mean_delta_k[0] + 1.0) < 0.01

    def test_ce_vanishes_for_confident_correct(self):
        table = _curve("ce", 10, np.array([15.0]))
        assert abs(table.mean_delta_k[0]) < 0.01

    def test_mae_tail_vanishes(self):
        table = _curve("mae", 10, np.array([-10.0]))
        assert abs(table.mean_delta_k[0]) < 1e-3

    def test_ce_curve_is_monotone_within_noise(self):
        table = _curve("ce", 10, np.linspace(-10, 10, 21), n=2000)
        lo = table.mean_delta_k - 3 * table.stderr
        hi = table.mean_delta_k + 3 * table.stderr
        assert all(hi[i + 1] >= lo[i] for i in range(20))

    def test_mae_has_interior_minimum(self):
        table = _curve("mae", 10, np.linspace(-10, 10, 41), n=2000)
        argmin = int(table.mean_delta_k.argmin())
        assert 0 < argmin < 40

    def test_rejects_spec_with_bias(self):
        spec = LossSpec.for_classes("mae", 10, epsilon=0.5)
        with pytest.raises(ConfigError):
            learning_curve(spec, 10, default_z_grid(), 100, RngStream(0))

    def test_rejects_bad_grids(self):
        spec = LossSpec.for_classes("ce", 10)
        with pytest.raises(ConfigError):
            learning_curve(spec, 10, np.array([1.0, 0.5]), 100, RngStream(0))
        with pytest.raises(ConfigError):
            learning_curve(spec, 10, np.array([]), 100, RngStream(0))

    def test_reproducible_from_seed(self):
        grid = np.linspace(-3, 3, 7)
        a = _curve("gence", 10, grid, n=500, seed=31)
        b = _curve("gence", 10, grid, n=500, seed=31)
        np.testing.assert_array_equal(a.mean_delta_k, b.mean_delta_k)
        np.testing.assert_array_equal(a.stderr, b.stderr)


class TestInitialHistogram:
    def test_counts_are_conserved(self):
        edges = np.linspace(-6, 6, 25)
        hist = initial_histogram(10, 0.0, 5000, edges, RngStream(32))
        assert hist.counts.sum() == 5000

    def test_shift_moves_the_mass(self):
        edges = np.linspace(-10, 10, 81)
        mids = 0.5 * (edges[:-1] + edges[1:])
        h0 = initial_histogram(10, 0.0, 50_000, edges, RngStream(33))
        h25 = initial_histogram(10, 2.5, 50_000, edges, RngStream(33))
        mean0 = (mids * h0.counts).sum() / h0.counts.sum()
        mean25 = (mids * h25.counts).sum() / h25.counts.sum()
        assert abs(mean0) < 0.05
        assert abs(mean25 - 2.5) < 0.05
        assert h25.shift == 2.5

    def test_rejects_unsorted_edges(self):
        with pytest.raises(ConfigError):
            initial_histogram(10, 0.0, 100, np.array([1.0, 0.0, 2.0]), RngStream(0))


class TestOverlapMetric:
    def test_ce_overlap_in_unit_interval(self):
        value = overlap_metric(LossSpec.for_classes("ce", 10), 10, 0.0, 10_000, RngStream(34))
        assert 0.0 < value <= 1.0

    def test_boundce_overlap_grows_with_bias(self):
        spec = LossSpec.for_classes("boundce", 10)
        plain = overlap_metric(spec, 10, 0.0, 20_000, RngStream(35))
        biased = overlap_metric(spec, 10, 0.5, 20_000, RngStream(35))
        assert biased > plain

    def test_rejects_spec_with_bias(self):
        with pytest.raises(ConfigError):
            overlap_metric(LossSpec.for_classes("mae", 10, epsilon=1.0), 10, 0.0, 100, RngStream(0))


class TestCsvEmission:
    def test_curve_round_trip(self, tmp_path):
        table = CurveTable(
            z_grid=np.array([-1.0, 0.0, 1.0]),
            mean_delta_k=np.array([-0.5, -0.25, -0.125]),
            stderr=np.array([0.01, 0.02, 0.03]),
            loss_key="ce",
            n_classes=10,
            n_samples=100,
        )
        path = tmp_path / "curve.csv"
        write_curve_csv(table, path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["z_k", "mean_delta_k", "stderr"]
        assert len(rows) == 4
        np.testing.assert_allclose(
            [[float(v) for v in row] for row in rows[1:]],
            np.column_stack([table.z_grid, table.mean_delta_k, table.stderr]),
            rtol=0,
        )

    def test_histogram_rows(self, tmp_path):
        hist = initial_histogram(10, 0.0, 1000, np.linspace(-4, 4, 9), RngStream(36))
        path = tmp_path / "hist.csv"
        write_histogram_csv(hist, path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["bin_left", "bin_right", "count"]
        assert len(rows) == 9
        assert sum(int(r[2]) for r in rows[1:]) == 1000
