from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

import cardiofocus.baselines as bl
from cardiofocus.baselines import (
    Method,
    accumulate_extract,
    cluster_extract,
    cluster_extract_detailed,
    cluster_select,
    evaluation_budget,
    lattice,
)
from cardiofocus.cft import cft_focus
from cardiofocus.config import SpatialPoint
from cardiofocus.cost import SNR_D, point_cost, signal_cost
from cardiofocus.dsp import point_displacement
from cardiofocus.metrics import pcc
from cardiofocus.scene import simulate_data_cube
from cardiofocus.signals import DisplacementSeries

from conftest import cached_fixture, cardiac_waveform


def _fake_displacement(monkeypatch, table):
    """Route point_displacement through ``table(point) -> samples``."""

    def fake(cube, point, cfg=None):
        return DisplacementSeries(np.asarray(table(SpatialPoint(*point)), float), 200.0, check_bound=False)

    monkeypatch.setattr(bl, "point_displacement", fake)


def test_lattice_layout():
    pts = lattice(SpatialPoint(0, 1, 0), (5, 2, 1), 0.03)
    assert len(pts) == 10
    arr = np.array(pts)
    np.testing.assert_allclose(arr.mean(axis=0), [0, 1, 0], atol=1e-12)
    assert np.ptp(arr[:, 0]) == pytest.approx(0.12) and np.ptp(arr[:, 1]) == pytest.approx(0.03)
    assert len(lattice(SpatialPoint(0, 1, 0), (6, 6, 6), 0.06)) == 216


class TestAccumulate:
    def test_identical_signals_pass_through(self, monkeypatch, zero_cube):
        wave = np.sin(np.arange(400) / 9.0)
        _fake_displacement(monkeypatch, lambda p: wave)
        out = accumulate_extract(zero_cube, SpatialPoint(0, 0.8, 0))
        np.testing.assert_allclose(out.samples, wave, atol=1e-15)

    def test_is_the_lattice_mean(self, monkeypatch, zero_cube):
        # linear in the per-point signals
        rng = np.random.default_rng(0)
        table = {}

        def lookup(p):
            return table.setdefault(p, rng.standard_normal(50))

        _fake_displacement(monkeypatch, lookup)
        out = accumulate_extract(zero_cube, SpatialPoint(0, 0.8, 0)).samples
        np.testing.assert_allclose(out, np.mean(list(table.values()), axis=0))
        assert len(table) == 10

    def test_zero_cube_gives_zero(self, zero_cube):
        assert not np.any(accumulate_extract(zero_cube, SpatialPoint(0, 0.8, 0)).samples)

    def test_beyond_range(self, zero_cube):
        with pytest.raises(ValueError, match="max range"):
            accumulate_extract(zero_cube, SpatialPoint(0, 1.6, 0))

    @pytest.mark.parametrize("seed", range(3))
    def test_worse_than_focusing(self, seed):
        fx, cube = cached_fixture(seed)
        acc = signal_cost(accumulate_extract(cube, fx.torso_point)).cost
        _, c_cft, _ = cft_focus(fx.torso_point, lambda p: point_cost(cube, p).cost)
        assert c_cft < SNR_D < acc

    def test_deterministic(self):
        fx, cube = cached_fixture(0)
        a = accumulate_extract(cube, fx.torso_point).samples
        np.testing.assert_array_equal(a, accumulate_extract(cube, fx.torso_point).samples)


class TestClusterSelect:
    def test_identical_rows(self):
        sigs = np.tile(np.sin(np.arange(100) / 5.0), (7, 1))
        assert cluster_select(sigs) == (0, 7, False)

    def test_single_row(self):
        assert cluster_select(np.ones((1, 10))) == (0, 1, False)

    def test_all_singletons_fall_back_to_cost(self):
        # orthonormal rows are mutually uncorrelated
        sigs = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 5)))[0].T
        sigs -= sigs.mean(axis=1, keepdims=True)
        idx, size, flagged = cluster_select(sigs, cost_fn=lambda i: [3, 1, 2, 5, 4][i])
        assert (idx, size, flagged) == (1, 1, True)

    def test_flat_rows_correlate_with_nothing(self):
        idx, size, flagged = cluster_select(np.zeros((4, 20)), cost_fn=lambda i: 0.0)
        assert flagged and size == 1

    def test_picks_from_the_shared_group(self):
        rng = np.random.default_rng(1)
        _, wave = cardiac_waveform()
        w = wave.samples / wave.samples.std()
        sigs = rng.standard_normal((216, w.size))
        shared = rng.choice(216, 30, replace=False)
        sigs[shared] = w + 0.2 * rng.standard_normal((30, w.size))
        idx, size, flagged = cluster_select(sigs)
        assert idx in shared and size == 30 and not flagged
        assert pcc(sigs[idx], w) > 0.95


class TestClusterExtract:
    def test_thirty_points_share_the_cardiac_signal(self, monkeypatch, zero_cube):
        _, wave = cardiac_waveform()
        center = SpatialPoint(0, 0.8, 0)
        pts = lattice(center, (6, 6, 6), 0.06)
        rng = np.random.default_rng(2)
        shared = {pts[i] for i in rng.choice(216, 30, replace=False)}
        _fake_displacement(
            monkeypatch,
            lambda p: (wave.samples if p in shared else 0.0) + 1e-6 * rng.standard_normal(wave.samples.size),
        )
        res = cluster_extract_detailed(zero_cube, center)
        assert res.point in shared and res.n_points == 216
        assert pcc(res.signal.samples, wave.samples) > 0.95

    @pytest.mark.parametrize("seed", range(3))
    def test_heart_beyond_lattice_reach_fails_threshold(self, seed):
        fx, _ = cached_fixture(seed)
        torso = fx.torso_point.as_array()
        heart = SpatialPoint(*(torso + [-0.25 if torso[0] > 0 else 0.25, 0.0, 0.0]))
        cube = simulate_data_cube(replace(fx.scene, cardiac_point=heart), fx.config)
        assert point_cost(cube, heart).cost < SNR_D
        assert signal_cost(cluster_extract(cube, fx.torso_point)).cost > SNR_D

    def test_output_is_a_lattice_signal(self):
        fx, cube = cached_fixture(1)
        res = cluster_extract_detailed(cube, fx.torso_point)
        np.testing.assert_array_equal(res.signal.samples, point_displacement(cube, res.point).samples)

    def test_beyond_range(self, zero_cube):
        with pytest.raises(ValueError, match="max range"):
            cluster_extract(zero_cube, SpatialPoint(0, 1.6, 0))


class TestBudget:
    def test_published_counts(self):
        assert evaluation_budget("cluster") == 3240
        assert evaluation_budget(Method.ACCUMULATE) == 2400
        assert evaluation_budget("accumulate", n_segments=1) == 160

    def test_cft_reads_traces(self):
        traces = [SimpleNamespace(eval_count=n) for n in (12, 1, 1, 3)]
        assert evaluation_budget("cft", traces=traces) == 17
        with pytest.raises(ValueError):
            evaluation_budget("cft")
        with pytest.raises(ValueError):
            evaluation_budget("bogus")
