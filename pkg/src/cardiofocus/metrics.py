"""Peak error, missed-detection rate, MSE and PCC.

Truth peaks partition time into cardiac cycles whose boundaries are the
midpoints between neighbouring truth peaks. Every truth peak is matched to
the nearest predicted peak inside its own cycle, so no predicted peak can be
used twice.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MISS_THRESHOLD_MS = 150.0


@dataclass(frozen=True)
class PeakSet:
    times_s: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float).ravel()
        if not np.all(np.isfinite(t)):
            raise ValueError("peak times must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("peak times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times_s", t)

    def __len__(self) -> int:
        return self.times_s.size

    @classmethod
    def from_indices(cls, indices, rate_hz: float) -> "PeakSet":
        return cls(np.sort(np.asarray(indices, dtype=float)) / rate_hz)


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[float, float], ...]  # (truth, pred)
    unmatched_truth: tuple[float, ...]
    unmatched_pred: tuple[float, ...]


def cycle_bounds(truth: PeakSet) -> tuple[np.ndarray, np.ndarray]:
    """Half-open [lo, hi) cycle windows around each truth peak.

    Inner boundaries are midpoints; the outer ones mirror the adjacent gap.
    A single truth peak owns the whole time axis.
    """
    t = truth.times_s
    if t.size == 0:
        return t.copy(), t.copy()
    if t.size == 1:
        return np.array([-math.inf]), np.array([math.inf])
    mid = (t[1:] + t[:-1]) / 2
    lo = np.concatenate([[t[0] - (t[1] - t[0]) / 2], mid])
    hi = np.concatenate([mid, [t[-1] + (t[-1] - t[-2]) / 2]])
    return lo, hi


def match_peaks(pred: PeakSet, truth: PeakSet) -> Matching:
    """Pair each truth peak with the nearest predicted peak in its cycle."""
    lo, hi = cycle_bounds(truth)
    p = pred.times_s
    pairs, missed, used = [], [], np.zeros(p.size, dtype=bool)
    for t, a, b in zip(truth.times_s, lo, hi):
        cand = np.flatnonzero((p >= a) & (p < b))
        if cand.size == 0:
            missed.append(float(t))
            continue
        j = cand[np.argmin(np.abs(p[cand] - t))]  # first of equals wins
        used[j] = True
        pairs.append((float(t), float(p[j])))
    return Matching(tuple(pairs), tuple(missed), tuple(float(x) for x in p[~used]))


def _errors_ms(pairs) -> np.ndarray:
    return np.array([abs(b - a) * 1000.0 for a, b in pairs])


def peak_error_ms(pairs) -> float:
    """Mean absolute peak error in milliseconds.

    Raises:
        ValueError: without pairs the error is undefined.
    """
    if len(pairs) == 0:
        raise ValueError("peak error is undefined without matched pairs")
    return float(np.mean(_errors_ms(pairs)))


def median_peak_error_ms(pairs) -> float:
    if len(pairs) == 0:
        raise ValueError("peak error is undefined without matched pairs")
    return float(np.median(_errors_ms(pairs)))


def _is_miss(err_ms: float) -> bool:
    # rounding keeps e.g. 1.15 - 1.0 from landing a hair above 150 ms
    return round(err_ms, 6) > MISS_THRESHOLD_MS


def mdr(pred: PeakSet, truth: PeakSet) -> float:
    """Fraction of truth cycles with no matched peak or an error above 150 ms."""
    if len(truth) == 0:
        raise ValueError("truth peak set is empty")
    m = match_peaks(pred, truth)
    missed = len(m.unmatched_truth) + sum(_is_miss(e) for e in _errors_ms(m.pairs))
    return missed / len(truth)


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def pcc(x, y) -> float:
    """Pearson correlation coefficient.

    Raises:
        ValueError: if either input has zero variance.
    """
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(np.dot(dx, dx)), math.sqrt(np.dot(dy, dy))
    if sx == 0 or sy == 0:
        raise ValueError("pcc undefined for zero-variance input")
    return float(np.clip(np.dot(dx, dy) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class MetricReport:
    mean_peak_error_ms: Optional[float]
    median_peak_error_ms: Optional[float]
    mdr: float
    mse: Optional[float] = None
    pcc: Optional[float] = None
    n_truth: int = 0
    n_pred: int = 0
    n_matched: int = 0
    cycles: tuple[tuple[float, Optional[float], bool], ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not 0.0 <= self.mdr <= 1.0:
            raise ValueError("mdr must lie in [0, 1]")
        if self.pcc is not None and not -1.0 <= self.pcc <= 1.0:
            raise ValueError("pcc must lie in [-1, 1]")

    @property
    def peak_error_defined(self) -> bool:
        return self.mean_peak_error_ms is not None

    def to_dict(self) -> dict:
        return {
            "mean_peak_error_ms": self.mean_peak_error_ms,
            "median_peak_error_ms": self.median_peak_error_ms,
            "mdr": self.mdr,
            "mse": self.mse,
            "pcc": self.pcc,
            "n_truth": self.n_truth,
            "n_pred": self.n_pred,
            "n_matched": self.n_matched,
            "peak_error_defined": self.peak_error_defined,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_cycles_csv(self, path) -> None:
        """One row per truth cycle: time, peak error (blank if unmatched), miss flag."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "peak_error_ms", "mdr_flag"])
            for t, err, miss in self.cycles:
                w.writerow([repr(t), "" if err is None else repr(err), int(miss)])


def evaluate_peaks(pred: PeakSet, truth: PeakSet, x=None, x_ref=None) -> MetricReport:
    """Full report; MSE and PCC only when both waveforms are given."""
    m = match_peaks(pred, truth)
    errs = _errors_ms(m.pairs)
    by_truth = {a: e for (a, _), e in zip(m.pairs, errs)}
    cycles = tuple(
        (float(t), None if t not in by_truth else float(by_truth[t]), t not in by_truth or _is_miss(by_truth[t]))
        for t in truth.times_s
    )
    m_err = float(errs.mean()) if errs.size else None
    med = float(np.median(errs)) if errs.size else None
    w_mse = w_pcc = None
    if x is not None and x_ref is not None:
        w_mse = mse(x, x_ref)
        try:
            w_pcc = pcc(x, x_ref)
        except ValueError:
            w_pcc = None
    return MetricReport(
        m_err,
        med,
        mdr(pred, truth),
        w_mse,
        w_pcc,
        n_truth=len(truth),
        n_pred=len(pred),
        n_matched=len(m.pairs),
        cycles=cycles,
    )
