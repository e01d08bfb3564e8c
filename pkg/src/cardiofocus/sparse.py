"""Sparse heartbeat recovery: targets, Hoyer-penalized loss and an ISTA solver.

The observed signal is modelled as h = Phi x + n with x a sparse vector of
heartbeat activations. ``ssr_loss`` scores a code against a sparse target as
an unsquared L2 distance plus a Hoyer-style sparsity penalty;
``ssr_solve`` recovers x from h by proximal gradient on the lasso objective.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .signals import DisplacementSeries


@dataclass(frozen=True)
class SparseTarget:
    values: np.ndarray
    empty: bool  # no peaks were given, target is all zero


def make_sparse_target(env: DisplacementSeries, peaks) -> SparseTarget:
    """Keep the envelope value at each peak index, zero everywhere else."""
    x = np.asarray(env.samples, dtype=float)
    idx = np.asarray(peaks, dtype=int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= x.size):
        raise ValueError(f"peak indices must lie in [0, {x.size})")
    out = np.zeros_like(x)
    out[idx] = x[idx]
    return SparseTarget(out, idx.size == 0)


def hoyer_penalty(x, lambda_s: float) -> float:
    """lambda_s * (|x|_1/|x|_2 - 1) / (sqrt(m) - 1).

    Zero for a one-hot vector and exactly lambda_s for a vector whose
    entries all share one magnitude.

    Raises:
        ValueError: for an all-zero vector, fewer than 2 entries or a
            negative weight.
    """
    x = np.asarray(x, dtype=float).ravel()
    if lambda_s < 0:
        raise ValueError("lambda_s must be non-negative")
    m = x.size
    if m < 2:
        raise ValueError("need at least 2 entries")
    l2 = np.linalg.norm(x)
    if l2 == 0:
        raise ValueError("penalty undefined for the all-zero vector")
    ratio = np.abs(x).sum() / l2
    # the ratio can overshoot [1, sqrt(m)] by rounding
    ratio = min(max(ratio, 1.0), math.sqrt(m))
    return float(lambda_s * (ratio - 1.0) / (math.sqrt(m) - 1.0))


def ssr_loss(x, target, lambda_s: float) -> float:
    """Unsquared L2 distance to the target plus the Hoyer penalty.

    The penalty of the all-zero code is taken as lambda_s.
    """
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    if x.shape != t.shape:
        raise ValueError(f"length mismatch: {x.size} vs {t.size}")
    pen = lambda_s if not np.any(x) else hoyer_penalty(x, lambda_s)
    return float(np.linalg.norm(x - t) + pen)


def ssr_loss_grad(x, target, lambda_s: float) -> np.ndarray:
    """Gradient of ``ssr_loss`` where it is differentiable (x != target, no zero entries)."""
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    d = x - t
    nd = np.linalg.norm(d)
    g = d / nd if nd > 0 else np.zeros_like(x)
    l1, l2 = np.abs(x).sum(), np.linalg.norm(x)
    if l2 > 0:
        scale = lambda_s / (math.sqrt(x.size) - 1.0)
        g = g + scale * (np.sign(x) / l2 - l1 * x / l2**3)
    return g


@dataclass(frozen=True)
class SparseProblem:
    h: np.ndarray
    Phi: np.ndarray
    lambda_l1: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).ravel()
        phi = np.asarray(self.Phi, dtype=float)
        if phi.ndim != 2 or phi.shape[0] != h.size:
            raise ValueError(f"Phi must be {h.size} x m, got {phi.shape}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(phi))):
            raise ValueError("h and Phi must be finite")
        if not self.lambda_l1 > 0:
            raise ValueError("lambda_l1 must be positive")
        norms = np.linalg.norm(phi, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-8):
            raise ValueError("Phi columns must have unit norm")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "Phi", phi)

    @property
    def m(self) -> int:
        return self.Phi.shape[1]

    def objective(self, x: np.ndarray) -> float:
        r = self.h - self.Phi @ x
        return float(0.5 * r @ r + self.lambda_l1 * np.abs(x).sum())

    def to_dict(self) -> dict:
        return {"h": self.h.tolist(), "Phi": self.Phi.tolist(), "lambda_l1": self.lambda_l1}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SparseProblem":
        d = json.loads(text)
        missing = {"h", "Phi", "lambda_l1"} - set(d)
        if missing:
            raise ValueError(f"sparse problem: missing field(s) {sorted(missing)}")
        return cls(np.asarray(d["h"], dtype=float), np.asarray(d["Phi"], dtype=float), float(d["lambda_l1"]))


@dataclass(frozen=True)
class SparseCode:
    x: np.ndarray
    hoyer_penalty: float
    target: Optional[np.ndarray] = None
    objective_trace: tuple[float, ...] = field(default=(), repr=False)
    iterations: int = 0

    def support(self, rel_tol: float = 1e-2) -> np.ndarray:
        """Indices whose magnitude exceeds ``rel_tol`` times the largest one.

        Lasso leaves a few tiny coefficients off the true support; the
        relative cut separates them from real activations.
        """
        peak = np.abs(self.x).max() if self.x.size else 0.0
        if peak == 0:
            return np.empty(0, dtype=int)
        return np.flatnonzero(np.abs(self.x) > rel_tol * peak)

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "hoyer_penalty": self.hoyer_penalty,
            "target": None if self.target is None else self.target.tolist(),
            "iterations": self.iterations,
            "final_objective": self.objective_trace[-1] if self.objective_trace else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def lipschitz_constant(phi: np.ndarray, n_iter: int = 500, seed: int = 0) -> float:
    """Largest eigenvalue of Phi^T Phi by power iteration."""
    v = np.random.default_rng(seed).standard_normal(phi.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = phi.T @ (phi @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = float(v @ (phi.T @ (phi @ v)))
        if abs(new - lam) <= 1e-12 * max(new, 1.0):
            lam = new
            break
        lam = new
    return lam * (1 + 1e-6)  # margin covers the power-iteration underestimate


def ssr_solve(prob: SparseProblem, max_iter: int = 5000, tol: float = 1e-10, penalty_weight: float = 0.01) -> SparseCode:
    """Iterative shrinkage-thresholding on 0.5|h - Phi x|^2 + lambda_l1 |x|_1.

    Step 1/L with L from power iteration, which keeps the objective
    non-increasing. Stops when the relative objective change drops below
    ``tol``. The reported Hoyer penalty uses ``penalty_weight``.
    """
    phi, h = prob.Phi, prob.h
    x = np.zeros(prob.m)
    obj = prob.objective(x)
    trace = [obj]
    L = lipschitz_constant(phi)
    if L == 0 or not np.any(h):
        return SparseCode(x, penalty_weight, objective_trace=tuple(trace))
    step = 1.0 / L
    it = 0
    for it in range(1, max_iter + 1):
        x = soft_threshold(x - step * (phi.T @ (phi @ x - h)), step * prob.lambda_l1)
        new = prob.objective(x)
        trace.append(new)
        if abs(obj - new) <= tol * max(abs(obj), 1e-300):
            break
        obj = new
    pen = penalty_weight if not np.any(x) else hoyer_penalty(x, penalty_weight)
    return SparseCode(x, pen, objective_trace=tuple(trace), iterations=it)


def pulse_dictionary(m: int, width_s: float, rate_hz: float) -> np.ndarray:
    """Unit-norm columns, each a Gaussian pulse centered on one sample; pulses are truncated at the edges."""
    t = np.arange(m) / rate_hz
    d = np.exp(-((t[:, None] - t[None, :]) ** 2) / (2 * width_s**2))
    return d / np.linalg.norm(d, axis=0)


def write_matrix_csv(path, a: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(a):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
