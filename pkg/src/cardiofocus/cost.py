"""Template-matching cost that scores how much cardiac structure a point carries.

Pipeline per point: steer and unwrap, band-pass and differentiate, take the
normalized envelope, find the dominant peaks, then fit the double-Gaussian
template around every peak. The cost is the mean windowed MSE between the
envelope and the fitted template; clean heartbeats fit well, noise does not.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.ndimage import uniform_filter1d

from .config import RadarConfig, SpatialPoint
from .cube import DataCube
from .dsp import point_displacement
from .signals import DisplacementSeries
from .template import TemplateParams, double_gaussian

SNR_D = 0.01
PEAK_PROMINENCE = 0.3
PEAK_MIN_SPACING_S = 0.33
WINDOW_BEFORE_S = 0.15
WINDOW_AFTER_S = 0.55
ENVELOPE_SMOOTH_S = 0.025

# Gauss-Newton settings and the grid used when it does not converge
GN_MAX_ITER = 50
GN_TOL = 1e-10
GN_INIT = dict(c1=0.05, a2_ratio=0.5, db=0.25, c2=0.05)
GRID_WIDTHS = np.round(np.arange(0.02, 0.1001, 0.01), 3)
GRID_OFFSETS = np.round(np.arange(0.15, 0.4001, 0.05), 3)
_WIDTH_BOUNDS = (0.005, 0.5)


@dataclass(frozen=True)
class CostReport:
    cost: float
    fits: tuple[TemplateParams, ...] = ()
    beat_costs: tuple[float, ...] = ()
    peaks: tuple[int, ...] = ()
    reason: str = ""

    def __post_init__(self):
        if not self.cost >= 0:
            raise ValueError("cost must be non-negative")

    @property
    def fitted(self) -> TemplateParams | None:
        """The best-fitting beat, or None when nothing was fit."""
        if not self.fits:
            return None
        return self.fits[int(np.argmin(self.beat_costs))]

    def to_dict(self) -> dict:
        return {
            "cost": self.cost if math.isfinite(self.cost) else None,
            "fits": [f.to_dict() for f in self.fits],
            "beat_costs": list(self.beat_costs),
            "peaks": list(self.peaks),
            "reason": self.reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def analytic_magnitude(x: np.ndarray) -> np.ndarray:
    return np.abs(signal.hilbert(x))


def envelope(sig: DisplacementSeries, smooth_s: float = ENVELOPE_SMOOTH_S) -> DisplacementSeries:
    """Analytic-signal magnitude, moving-average smoothed, normalized to max 1."""
    x = sig.samples
    if x.size < 16:
        raise ValueError("envelope needs at least 16 samples")
    if not np.any(x):
        raise ValueError("flat signal")
    env = analytic_magnitude(x)
    width = int(round(smooth_s * sig.rate_hz))
    if width > 1:
        env = uniform_filter1d(env, width, mode="nearest")
    peak = env.max()
    if not peak > 0 or not np.isfinite(peak):
        raise ValueError("flat signal")
    return sig.derived(env / peak)


def detect_dominant_peaks(env: DisplacementSeries) -> np.ndarray:
    distance = max(1, int(math.ceil(PEAK_MIN_SPACING_S * env.rate_hz)))
    peaks, _ = signal.find_peaks(env.samples, prominence=PEAK_PROMINENCE, distance=distance)
    return np.sort(peaks)


def _model(t, a1, b1, theta):
    # theta columns: c1, a2, b2, c2; t is (W,), the rest broadcast over beats
    c1, a2, b2, c2 = (theta[:, i, None] for i in range(4))
    return double_gaussian(t[None, :], a1[:, None], b1[:, None], c1, a2, b2, c2)


def _project(theta, a1, b1, t_end):
    theta[:, 0] = np.clip(theta[:, 0], *_WIDTH_BOUNDS)
    theta[:, 3] = np.clip(theta[:, 3], *_WIDTH_BOUNDS)
    theta[:, 1] = np.clip(theta[:, 1], 0.0, a1)
    theta[:, 2] = np.clip(theta[:, 2], b1, t_end)
    return theta


def _gauss_newton(t, y, a1, b1):
    """Fit (c1, a2, b2, c2) for a batch of beat windows.

    Returns (theta, mse, converged) with one row per beat.
    """
    nb = y.shape[0]
    theta = np.column_stack(
        [
            np.full(nb, GN_INIT["c1"]),
            GN_INIT["a2_ratio"] * a1,
            b1 + GN_INIT["db"],
            np.full(nb, GN_INIT["c2"]),
        ]
    )
    t_end = t[-1]
    theta = _project(theta, a1, b1, t_end)
    r = y - _model(t, a1, b1, theta)
    mse = np.mean(r**2, axis=1)
    converged = np.zeros(nb, dtype=bool)
    for _ in range(GN_MAX_ITER):
        active = ~converged
        if not active.any():
            break
        th, rr, aa, bb = theta[active], r[active], a1[active], b1[active]
        base = y[active] - rr
        steps = 1e-7 * np.maximum(np.abs(th), 1e-3)
        jac = np.empty(rr.shape + (4,))
        for j in range(4):
            tp = th.copy()
            tp[:, j] += steps[:, j]
            jac[:, :, j] = (_model(t, aa, bb, tp) - base) / steps[:, j, None]
        jtj = np.einsum("bwi,bwj->bij", jac, jac)
        jtr = np.einsum("bwi,bw->bi", jac, rr)
        ridge = 1e-9 * np.einsum("bii->bi", jtj) + 1e-14
        jtj[:, range(4), range(4)] += ridge
        try:
            delta = np.linalg.solve(jtj, jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        old = mse[active]
        new_theta, new_mse = th.copy(), old.copy()
        pending = np.ones(th.shape[0], dtype=bool)
        alpha = 1.0
        for _ in range(12):
            cand = _project(th + alpha * delta, aa, bb, t_end)
            cand_mse = np.mean((y[active] - _model(t, aa, bb, cand)) ** 2, axis=1)
            ok = pending & np.isfinite(cand_mse) & (cand_mse < old)
            new_theta[ok], new_mse[ok] = cand[ok], cand_mse[ok]
            pending &= ~ok
            if not pending.any():
                break
            alpha *= 0.5
        rel = (old - new_mse) / np.maximum(old, 1e-300)
        done = pending | (rel < GN_TOL)
        idx = np.flatnonzero(active)
        theta[idx], mse[idx] = new_theta, new_mse
        r[idx] = y[idx] - _model(t, a1[idx], b1[idx], new_theta)
        converged[idx[done]] = True
    return theta, mse, converged & np.isfinite(mse)


def _grid_fit(t, y, a1, b1):
    """Coarse search over widths and second-peak offsets; a2 by clipped least squares."""
    c1, c2, db = np.meshgrid(GRID_WIDTHS, GRID_WIDTHS, GRID_OFFSETS, indexing="ij")
    c1, c2, db = c1.ravel(), c2.ravel(), db.ravel()
    g1 = np.exp(-((t[None, None, :] - b1[:, None, None]) ** 2) / (2 * c1[None, :, None] ** 2))
    g2 = np.exp(-((t[None, None, :] - (b1[:, None, None] + db[None, :, None])) ** 2) / (2 * c2[None, :, None] ** 2))
    resid1 = y[:, None, :] - a1[:, None, None] * g1
    a2 = np.sum(g2 * resid1, axis=2) / np.maximum(np.sum(g2**2, axis=2), 1e-300)
    a2 = np.clip(a2, 0.0, a1[:, None])
    mse = np.mean((resid1 - a2[:, :, None] * g2) ** 2, axis=2)
    best = np.argmin(mse, axis=1)
    rows = np.arange(y.shape[0])
    theta = np.column_stack([c1[best], a2[rows, best], b1 + db[best], c2[best]])
    return theta, mse[rows, best]


def fit_template(env: DisplacementSeries, peaks) -> CostReport:
    """Fit the template around each peak and average the windowed MSEs.

    a1 and b1 come from the detected peak; c1, a2, b2, c2 are fit by
    Gauss-Newton, falling back to a coarse grid when it does not converge.
    Windows that run past either end of the segment are skipped.
    """
    x = env.samples
    rate = env.rate_hz
    peaks = np.asarray(peaks, dtype=int)
    if peaks.size == 0:
        return CostReport(math.inf, reason="no dominant peaks")
    before = int(round(WINDOW_BEFORE_S * rate))
    after = int(round(WINDOW_AFTER_S * rate))
    usable = peaks[(peaks - before >= 0) & (peaks + after < x.size)]
    if usable.size == 0:
        return CostReport(math.inf, peaks=tuple(int(p) for p in peaks), reason="all beat windows hit the segment edge")
    t = np.arange(-before, after + 1) / rate
    idx = usable[:, None] + np.arange(-before, after + 1)[None, :]
    y = x[idx]
    a1 = x[usable].astype(float)
    b1 = np.zeros(usable.size)
    theta, mse, ok = _gauss_newton(t, y, a1, b1)
    if not ok.all():
        g_theta, g_mse = _grid_fit(t, y[~ok], a1[~ok], b1[~ok])
        bad = np.flatnonzero(~ok)
        better = ~np.isfinite(mse[bad]) | (g_mse < mse[bad])
        theta[bad[better]] = g_theta[better]
        mse[bad[better]] = g_mse[better]
    fits = []
    for p, a, th in zip(usable, a1, theta):
        tp = p / rate
        a2 = min(float(th[1]), float(a))
        fits.append(TemplateParams(float(a), tp, float(th[0]), a2, tp + float(th[2]), float(th[3])))
    return CostReport(
        float(np.mean(mse)),
        fits=tuple(fits),
        beat_costs=tuple(float(m) for m in mse),
        peaks=tuple(int(p) for p in peaks),
    )


def signal_peaks(sig: DisplacementSeries) -> np.ndarray:
    """Dominant envelope peak indices of a cleaned signal; empty for a flat one."""
    try:
        return detect_dominant_peaks(envelope(sig))
    except ValueError:
        return np.empty(0, dtype=int)


def signal_cost(sig: DisplacementSeries) -> CostReport:
    """Envelope, peaks and template fit of an already cleaned signal."""
    try:
        env = envelope(sig)
    except ValueError as exc:
        return CostReport(math.inf, reason=str(exc))
    return fit_template(env, detect_dominant_peaks(env))


def point_cost(cube: DataCube, point: SpatialPoint, cfg: RadarConfig | None = None, omega=None) -> CostReport:
    """Cost F(E) of a 3D point; +inf outside the search space or beyond range."""
    cfg = cfg or cube.config
    point = SpatialPoint(*point)
    if omega is not None and not omega.contains(point):
        return CostReport(math.inf, reason="outside search space")
    if point.range_m > cfg.max_range_m:
        return CostReport(math.inf, reason="beyond max range")
    return signal_cost(point_displacement(cube, point, cfg))
