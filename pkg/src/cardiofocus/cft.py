"""Cardio-focusing and -tracking (CFT): coordinate search with a search region
decoupled from the grid size.

Each iteration builds a grid of points along an orthonormal direction set
(seeded from the Halton sequence) and evaluates a Latin-hypercube subset of
it. If nothing improves, every grid point inside the search region S_k (an
infinity-norm box of size Gamma around the incumbent) is evaluated. Any
improvement doubles Gamma; a failed iteration halves it. The grid size
follows ``gamma = min(Gamma, Gamma**2)`` evaluated on Gamma / Gamma_init so
that the rule is unit-free, then clamped to [size_floor, Gamma].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .config import SpatialPoint

_PRIMES = (2, 3, 5, 7, 11, 13)


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box around ``center``; defaults to 0.4 x 0.2 x 0.4 m."""

    center: SpatialPoint
    half_extents: tuple[float, float, float] = (0.2, 0.1, 0.2)

    def __post_init__(self):
        object.__setattr__(self, "center", SpatialPoint(*map(float, self.center)))
        he = tuple(float(h) for h in self.half_extents)
        if len(he) != 3 or min(he) <= 0:
            raise ValueError("half_extents must be three positive lengths")
        object.__setattr__(self, "half_extents", he)

    @property
    def lower(self) -> np.ndarray:
        return self.center.as_array() - np.array(self.half_extents)

    @property
    def upper(self) -> np.ndarray:
        return self.center.as_array() + np.array(self.half_extents)

    @property
    def diagonal(self) -> float:
        return 2 * float(np.linalg.norm(self.half_extents))

    def contains_array(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)

    def contains(self, point) -> bool:
        return bool(self.contains_array(np.asarray(point, dtype=float))[0])

    def recentered(self, center) -> "SearchSpace":
        return SearchSpace(SpatialPoint(*center), self.half_extents)


@dataclass(frozen=True)
class CftParams:
    snr_d: float = 0.01
    k_max: int = 100
    gamma_init: float = 0.1
    Gamma_init: float = 0.1
    size_floor: float = 0.001
    n_search_samples: int = 16
    rng_seed: int = 0

    def __post_init__(self):
        if not self.Gamma_init >= self.gamma_init >= self.size_floor > 0:
            raise ValueError("need Gamma_init >= gamma_init >= size_floor > 0")
        if self.k_max < 0 or self.n_search_samples < 1:
            raise ValueError("k_max must be >= 0 and n_search_samples >= 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    point: SpatialPoint
    cost: float
    Gamma: float
    gamma: float
    stage: str


@dataclass(frozen=True)
class IterationRecord:
    """Sizes before/after one iteration and how it ended."""

    iteration: int
    Gamma: float
    gamma: float
    Gamma_next: float
    gamma_next: float
    stage: str  # "search", "region" or "fail"
    cost_before: float
    cost_after: float


@dataclass
class CftState:
    e_k: SpatialPoint
    cost_k: float
    Gamma_k: float
    gamma_k: float
    iteration: int = 0
    eval_count: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    history: list[IterationRecord] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "x", "y", "z", "cost", "Gamma", "gamma", "stage"])
            for r in self.trace:
                w.writerow([r.iteration, *(repr(float(c)) for c in r.point), repr(float(r.cost)), repr(r.Gamma), repr(r.gamma), r.stage])


@dataclass(frozen=True)
class DirectionSet:
    """Positive spanning set {+q_i, -q_i} from an orthonormal basis (rows of ``basis``)."""

    basis: np.ndarray

    @property
    def vectors(self) -> np.ndarray:
        return np.concatenate([self.basis, -self.basis])

    def __len__(self) -> int:
        return 2 * self.basis.shape[0]


def radical_inverse(index: int, base: int) -> float:
    """Van der Corput radical inverse of a non-negative integer."""
    result, f = 0.0, 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * f
        f /= base
    return result


def halton_point(index: int, dim: int = 3) -> np.ndarray:
    return np.array([radical_inverse(index, b) for b in _PRIMES[:dim]])


def householder_basis(seed: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as rows) whose first vector is ``seed``/|seed|.

    Uses the reflection that maps e_1 onto the seed; the identity when the
    seed already is e_1.
    """
    s = np.asarray(seed, dtype=float)
    s = s / np.linalg.norm(s)
    e1 = np.zeros_like(s)
    e1[0] = 1.0
    w = e1 - s
    nw = w @ w
    if nw < 1e-24:
        return np.eye(s.size)
    h = np.eye(s.size) - 2.0 * np.outer(w, w) / nw
    return h.T  # rows = columns of the symmetric reflection


def generate_directions(iteration: int, dim: int = 3) -> DirectionSet:
    """Directions from the Halton point (bases 2, 3, 5) at index iteration + 1."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    seed = 2.0 * halton_point(iteration + 1, dim) - 1.0
    if np.linalg.norm(seed) < 1e-12:
        seed = np.eye(dim)[0]
    return DirectionSet(householder_basis(seed))


@dataclass(frozen=True)
class Grid:
    points: np.ndarray  # (M, dim), G_k
    direction: np.ndarray  # index into DirectionSet.vectors
    step: np.ndarray  # multiplier m >= 1
    inside: np.ndarray  # point lies in omega
    in_region: np.ndarray  # point lies in S_k

    @property
    def G(self) -> np.ndarray:
        return self.points

    @property
    def S(self) -> np.ndarray:
        return self.points[self.in_region]


def build_grid(
    e_k,
    gamma_k: float,
    dirs: DirectionSet,
    omega: SearchSpace,
    Gamma_k: float,
    reach: Optional[float] = None,
) -> Grid:
    """Grid points e_k + m*gamma*p and the search-region subset.

    Rays extend ``reach`` (default: the diagonal of omega) from the incumbent.
    Points outside omega are kept and flagged; they cost +inf by contract.
    """
    if Gamma_k < gamma_k:
        raise ValueError("Gamma_k must be >= gamma_k")
    e = np.asarray(e_k, dtype=float)
    reach = omega.diagonal if reach is None else reach
    m_max = max(1, int(math.ceil(reach / gamma_k - 1e-9)))
    vecs = dirs.vectors
    m = np.arange(1, m_max + 1)
    pts = e[None, None, :] + gamma_k * m[None, :, None] * vecs[:, None, :]
    direction = np.repeat(np.arange(len(vecs)), m_max)
    step = np.tile(m, len(vecs))
    pts = pts.reshape(-1, e.size)
    inside = omega.contains_array(pts)
    in_region = np.max(np.abs(pts - e), axis=1) <= Gamma_k * (1 + 1e-12)
    return Grid(pts, direction, step, inside, in_region)


def latin_hypercube_subset(grid: Grid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of up to ``n`` in-omega grid points, stratified over (direction, step)."""
    ndir = int(grid.direction.max()) + 1 if grid.direction.size else 0
    counts = np.array([np.count_nonzero(grid.inside & (grid.direction == d)) for d in range(ndir)])
    usable = np.flatnonzero(counts)
    if usable.size == 0:
        return np.empty(0, dtype=int)
    total = int(counts.sum())
    if total <= n:
        return np.flatnonzero(grid.inside)
    u = qmc.LatinHypercube(d=2, seed=rng).random(n)
    chosen = []
    for u0, u1 in u:
        d = usable[min(int(u0 * usable.size), usable.size - 1)]
        # in-omega points along a ray from an interior point form a prefix
        in_dir = np.flatnonzero(grid.inside & (grid.direction == d))
        chosen.append(in_dir[min(int(u1 * in_dir.size), in_dir.size - 1)])
    _, first = np.unique(chosen, return_index=True)
    return np.asarray(chosen)[np.sort(first)]


def next_sizes(Gamma: float, improved: bool, params: CftParams) -> tuple[float, float]:
    """Resizing rule: (Gamma_{k+1}, gamma_{k+1}) from Gamma_k."""
    if improved:
        Gamma_next = 2.0 * Gamma
    else:
        Gamma_next = max(Gamma / 2.0, params.size_floor)
    rho = Gamma / params.Gamma_init
    gamma_next = params.Gamma_init * min(rho, rho * rho)
    gamma_next = min(max(gamma_next, params.size_floor), Gamma_next)
    return Gamma_next, gamma_next


class _Evaluator:
    """Wraps the black-box cost: memoizes, records the trace, maps omega exits to +inf."""

    def __init__(self, cost: Callable, omega: SearchSpace, state: CftState):
        self.cost = cost
        self.omega = omega
        self.state = state
        self.memo: dict[tuple, float] = {}

    def __call__(self, pts: np.ndarray, stage: str) -> np.ndarray:
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            key = tuple(float(c) for c in p)
            if key in self.memo:
                out[i] = self.memo[key]
                continue
            if not self.omega.contains(p):
                out[i] = math.inf
                continue
            c = float(self.cost(SpatialPoint(*key)))
            self.memo[key] = c
            out[i] = c
            st = self.state
            st.trace.append(TraceRow(st.iteration, SpatialPoint(*key), c, st.Gamma_k, st.gamma_k, stage))
            st.eval_count += 1
        return out


def _best(costs: np.ndarray) -> int:
    # np.argmin returns the first index among ties
    return int(np.argmin(costs)) if costs.size else -1


def cft_focus(
    e0,
    cost: Callable[[SpatialPoint], float],
    params: CftParams = CftParams(),
    omega: Optional[SearchSpace] = None,
) -> tuple[SpatialPoint, float, CftState]:
    """Search for the point with the lowest cost starting from ``e0``.

    Args:
        e0: initial point, must lie inside ``omega``.
        cost: black-box point -> cost; lower is better.
        params: thresholds and sizes.
        omega: search box; defaults to the standard box centered at ``e0``.

    Returns:
        (best point, its cost, final optimizer state with full trace).
    """
    e0 = SpatialPoint(*map(float, e0))
    omega = omega or SearchSpace(e0)
    if not omega.contains(e0):
        raise ValueError(f"initial point {tuple(e0)} lies outside the search space")
    rng = np.random.default_rng(params.rng_seed)
    state = CftState(e_k=e0, cost_k=math.inf, Gamma_k=params.Gamma_init, gamma_k=params.gamma_init)
    evaluate = _Evaluator(cost, omega, state)
    state.cost_k = float(evaluate(e0.as_array()[None, :], "init")[0])

    while state.cost_k >= params.snr_d and state.iteration < params.k_max:
        k = state.iteration
        e = state.e_k.as_array()
        grid = build_grid(e, state.gamma_k, generate_directions(k), omega, state.Gamma_k)
        before = state.cost_k
        stage = "fail"

        idx = latin_hypercube_subset(grid, params.n_search_samples, rng)
        costs = evaluate(grid.points[idx], "search")
        j = _best(costs)
        if j >= 0 and costs[j] < state.cost_k:
            new_point, new_cost, stage = grid.points[idx[j]], costs[j], "search"
        else:
            region = grid.points[grid.in_region & grid.inside]
            costs = evaluate(region, "region")
            j = _best(costs)
            if j >= 0 and costs[j] < state.cost_k:
                new_point, new_cost, stage = region[j], costs[j], "region"

        improved = stage != "fail"
        Gamma_next, gamma_next = next_sizes(state.Gamma_k, improved, params)
        if improved:
            state.e_k, state.cost_k = SpatialPoint(*map(float, new_point)), float(new_cost)
        state.history.append(
            IterationRecord(k, state.Gamma_k, state.gamma_k, Gamma_next, gamma_next, stage, before, state.cost_k)
        )
        state.Gamma_k, state.gamma_k = Gamma_next, gamma_next
        state.iteration += 1

    return state.e_k, state.cost_k, state


def coordinate_search(
    e0,
    cost: Callable[[SpatialPoint], float],
    params: CftParams = CftParams(),
    omega: Optional[SearchSpace] = None,
) -> tuple[SpatialPoint, float, CftState]:
    """Classic coordinate search with the search region tied to the grid (Gamma = gamma).

    Polls the 2n points at distance gamma along the same Halton-seeded
    directions; keeps gamma on success and halves it on failure.
    """
    e0 = SpatialPoint(*map(float, e0))
    omega = omega or SearchSpace(e0)
    if not omega.contains(e0):
        raise ValueError(f"initial point {tuple(e0)} lies outside the search space")
    state = CftState(e_k=e0, cost_k=math.inf, Gamma_k=params.gamma_init, gamma_k=params.gamma_init)
    evaluate = _Evaluator(cost, omega, state)
    state.cost_k = float(evaluate(e0.as_array()[None, :], "init")[0])
    while state.cost_k >= params.snr_d and state.iteration < params.k_max:
        k = state.iteration
        poll = state.e_k.as_array()[None, :] + state.gamma_k * generate_directions(k).vectors
        costs = evaluate(poll, "region")
        j = _best(costs)
        before = state.cost_k
        if costs[j] < state.cost_k:
            state.e_k, state.cost_k = SpatialPoint(*map(float, poll[j])), float(costs[j])
            g_next, stage = state.gamma_k, "region"
        else:
            g_next, stage = max(state.gamma_k / 2, params.size_floor), "fail"
        state.history.append(IterationRecord(k, state.Gamma_k, state.gamma_k, g_next, g_next, stage, before, state.cost_k))
        state.Gamma_k = state.gamma_k = g_next
        state.iteration += 1
    return state.e_k, state.cost_k, state


def top_k_points(state: CftState, k: int = 10) -> tuple[list[SpatialPoint], bool]:
    """The k lowest-cost distinct evaluated points, ascending.

    Returns (points, short) where ``short`` flags that fewer than k distinct
    points exist.
    """
    seen: dict[SpatialPoint, float] = {}
    for row in state.trace:
        if row.point not in seen:
            seen[row.point] = row.cost
    order = sorted(seen.items(), key=lambda kv: kv[1])  # stable: evaluation order breaks ties
    pts = [p for p, _ in order[:k]]
    return pts, len(seen) < k


@dataclass(frozen=True)
class SegmentResult:
    index: int
    e_b: SpatialPoint
    cost_b: float
    eval_count: int
    state: CftState = field(repr=False, compare=False)


def cft_track(
    cube,
    e0,
    params: CftParams = CftParams(),
    segment_s: float = 4.0,
    omega: Optional[SearchSpace] = None,
    cost_factory: Optional[Callable] = None,
) -> list[SegmentResult]:
    """Run CFT on consecutive segments, seeding each with the previous best point.

    The search box keeps its extents but is re-centered on the previous best
    point. A trailing partial segment is dropped.
    """
    from .cost import point_cost  # local import keeps the optimizer free of DSP at import time

    if cost_factory is None:
        def cost_factory(seg):
            return lambda p: point_cost(seg, p).cost

    rate = cube.frame_rate_hz
    seg_len = int(round(segment_s * rate))
    n_seg = cube.n_frames // seg_len
    if n_seg < 1:
        raise ValueError(f"cube has {cube.n_frames} frames, shorter than one {segment_s} s segment")
    e = SpatialPoint(*map(float, e0))
    box = omega or SearchSpace(e)
    results = []
    for i in range(n_seg):
        seg = cube.segment(i * seg_len, (i + 1) * seg_len)
        if i > 0:
            box = box.recentered(e)
        e, c, st = cft_focus(e, cost_factory(seg), params, box)
        results.append(SegmentResult(i, e, c, st.eval_count, st))
    return results
