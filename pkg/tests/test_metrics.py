import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiofocus.metrics import (
    MetricReport,
    PeakSet,
    cycle_bounds,
    evaluate_peaks,
    match_peaks,
    mdr,
    median_peak_error_ms,
    mse,
    pcc,
    peak_error_ms,
)


def brute_force_matching(pred, truth):
    """Best assignment by exhaustive search: most matches, then least total error.

    Each truth peak may take any unused predicted peak inside its own cycle.
    """
    lo, hi = cycle_bounds(PeakSet(truth))
    best = (-1, np.inf, ())

    def rec(i, used, pairs, err):
        nonlocal best
        if i == len(truth):
            key = (len(pairs), -err)
            if key > (best[0], -best[1]):
                best = (len(pairs), err, tuple(pairs))
            return
        rec(i + 1, used, pairs, err)
        for j, p in enumerate(pred):
            if j not in used and lo[i] <= p < hi[i]:
                rec(i + 1, used | {j}, pairs + [(truth[i], p)], err + abs(p - truth[i]))

    rec(0, frozenset(), [], 0.0)
    return best


def _random_case(rng):
    n_t = rng.integers(1, 7)
    n_p = rng.integers(0, 7)
    truth = np.sort(rng.choice(np.arange(0.0, 10.0, 0.001), n_t, replace=False))
    pred = np.sort(rng.choice(np.arange(0.0, 10.0, 0.0007), n_p, replace=False))
    return pred, truth


class TestMatching:
    def test_example(self):
        m = match_peaks(PeakSet([1.02, 2.1, 5.0]), PeakSet([1.0, 2.0, 3.0]))
        assert m.pairs == ((1.0, 1.02), (2.0, 2.1))
        assert m.unmatched_truth == (3.0,)
        assert m.unmatched_pred == (5.0,)

    def test_cycles(self):
        lo, hi = cycle_bounds(PeakSet([1.0, 2.0, 4.0]))
        np.testing.assert_allclose(lo, [0.5, 1.5, 3.0])
        np.testing.assert_allclose(hi, [1.5, 3.0, 5.0])
        lo, hi = cycle_bounds(PeakSet([2.0]))
        assert lo[0] == -np.inf and hi[0] == np.inf

    def test_equals_brute_force_on_small_fixtures(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            pred, truth = _random_case(rng)
            m = match_peaks(PeakSet(pred), PeakSet(truth))
            n, err, pairs = brute_force_matching(pred, truth)
            assert len(m.pairs) == n
            assert sum(abs(b - a) for a, b in m.pairs) == pytest.approx(err, abs=1e-12)
            assert m.pairs == pairs

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(0, 10_000), min_size=1, max_size=6, unique=True),
        st.lists(st.integers(0, 10_000), min_size=0, max_size=6, unique=True),
    )
    def test_brute_force_property(self, t_ms, p_ms):
        truth = np.sort(np.array(t_ms)) / 1000.0
        pred = np.sort(np.array(p_ms)) / 1000.0 + 0.0003  # keep distances tie-free
        m = match_peaks(PeakSet(pred), PeakSet(truth))
        n, err, _ = brute_force_matching(pred, truth)
        assert len(m.pairs) == n
        assert sum(abs(b - a) for a, b in m.pairs) == pytest.approx(err, abs=1e-12)

    def test_predicted_peaks_used_once(self):
        m = match_peaks(PeakSet([1.5]), PeakSet([1.0, 2.0]))
        assert len(m.pairs) == 1

    def test_peakset_validation(self):
        with pytest.raises(ValueError):
            PeakSet([1.0, 1.0])
        with pytest.raises(ValueError):
            PeakSet([np.nan])
        assert PeakSet.from_indices([400, 200], 200.0).times_s.tolist() == [1.0, 2.0]


class TestMdr:
    @pytest.mark.parametrize("offset_ms, missed", [(149, False), (150, False), (151, True)])
    def test_threshold_boundary(self, offset_ms, missed):
        truth = PeakSet([1.0, 2.0, 3.0])
        pred = PeakSet([1.0, 2.0 + offset_ms / 1000.0, 3.0])
        assert mdr(pred, truth) == pytest.approx(1 / 3 if missed else 0.0)

    def test_all_three_boundaries_at_once(self):
        assert mdr(PeakSet([1.149, 2.150, 3.151]), PeakSet([1.0, 2.0, 3.0])) == pytest.approx(1 / 3)

    def test_no_predictions(self):
        assert mdr(PeakSet([]), PeakSet([1.0, 2.0])) == 1.0

    def test_empty_truth(self):
        with pytest.raises(ValueError):
            mdr(PeakSet([1.0]), PeakSet([]))


class TestPeakError:
    def test_values(self):
        pairs = [(1.0, 1.01), (2.0, 2.03), (3.0, 2.98)]
        assert peak_error_ms(pairs) == pytest.approx(20.0)
        assert median_peak_error_ms(pairs) == pytest.approx(20.0)

    def test_undefined_without_pairs(self):
        with pytest.raises(ValueError):
            peak_error_ms([])
        with pytest.raises(ValueError):
            median_peak_error_ms([])


class TestWaveformMetrics:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0), st.floats(-100.0, 100.0), st.booleans())
    def test_pcc_affine_invariance(self, seed, a, b, flip):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        a = -a if flip else a
        expected = -pcc(x, y) if flip else pcc(x, y)
        assert abs(pcc(a * x + b, y) - expected) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_mse_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(30), rng.standard_normal(30)
        assert abs(mse(x, y) - mse(y, x)) <= 1e-12
        assert mse(x, x) == 0.0

    def test_pcc_examples(self):
        x = np.arange(10.0)
        assert pcc(x, 2 * x + 1) == pytest.approx(1.0)
        assert pcc(x, -x) == pytest.approx(-1.0)
        with pytest.raises(ValueError, match="zero-variance"):
            pcc(np.ones(5), x[:5])
        with pytest.raises(ValueError, match="mismatch"):
            mse(x, x[:3])


class TestReport:
    def test_full_report_and_exports(self, tmp_path):
        truth = PeakSet([1.0, 2.0, 3.0, 4.0])
        pred = PeakSet([1.01, 2.2, 4.0])
        t = np.linspace(0, 1, 100)
        rep = evaluate_peaks(pred, truth, np.sin(t), np.sin(t) + 0.01)
        assert rep.mdr == pytest.approx(0.5)
        assert rep.n_matched == 3 and rep.mse == pytest.approx(1e-4)
        d = json.loads(rep.to_json())
        assert d["peak_error_defined"] and d["n_truth"] == 4
        rep.write_cycles_csv(tmp_path / "c.csv")
        with open(tmp_path / "c.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time_s", "peak_error_ms", "mdr_flag"]
        assert [r[2] for r in rows[1:]] == ["0", "1", "1", "0"]
        assert rows[3][1] == ""

    def test_no_matches(self):
        rep = evaluate_peaks(PeakSet([]), PeakSet([1.0]))
        assert rep.mdr == 1.0 and rep.mean_peak_error_ms is None
        assert not rep.peak_error_defined

    def test_validation(self):
        with pytest.raises(ValueError):
            MetricReport(None, None, 1.5)
