"""Comparison extractors: lattice accumulation and correlation clustering.

Both are simplified stand-ins for published extractors. They keep the
published evaluation-count arithmetic (160 and 216 evaluations per 4 s
segment) but not every internal detail.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .config import RadarConfig, SpatialPoint
from .cost import signal_cost
from .cube import DataCube
from .dsp import point_displacement
from .signals import DisplacementSeries

ACCUMULATE_SPACING_M = 0.03
ACCUMULATE_SHAPE = (5, 2, 1)
CLUSTER_SPAN_M = 0.3
CLUSTER_SIDE = 6
CLUSTER_MIN_CORR = 0.6
SEGMENTS_PER_MINUTE = 15


class Method(str, Enum):
    CFT = "cft"
    ACCUMULATE = "accumulate"  # De-ViMo-style
    CLUSTER = "cluster"  # MMECG-style


def lattice(center: SpatialPoint, shape: tuple[int, int, int], spacing: float) -> list[SpatialPoint]:
    """Regular lattice centered on ``center``, x varying slowest."""
    axes = [(np.arange(n) - (n - 1) / 2) * spacing for n in shape]
    c = SpatialPoint(*center).as_array()
    return [SpatialPoint(*(c + np.array([dx, dy, dz]))) for dx in axes[0] for dy in axes[1] for dz in axes[2]]


def _in_range(points, cfg: RadarConfig):
    return [p for p in points if p.range_m <= cfg.max_range_m]


def accumulate_extract(cube: DataCube, center: SpatialPoint, cfg: RadarConfig | None = None) -> DisplacementSeries:
    """Mean cleaned displacement over a 10-point lattice (spacing 0.03 m) around ``center``."""
    cfg = cfg or cube.config
    center = SpatialPoint(*center)
    if center.range_m > cfg.max_range_m:
        raise ValueError(f"center {tuple(center)} is beyond max range")
    pts = _in_range(lattice(center, ACCUMULATE_SHAPE, ACCUMULATE_SPACING_M), cfg)
    sigs = np.stack([point_displacement(cube, p, cfg).samples for p in pts])
    return DisplacementSeries(sigs.mean(axis=0), cfg.frame_rate_hz, check_bound=False)


@dataclass(frozen=True)
class ClusterResult:
    signal: DisplacementSeries
    point: SpatialPoint
    cluster_size: int
    n_points: int
    flagged: bool  # every lattice point ended up alone


def _correlation_distance(sigs: np.ndarray) -> np.ndarray:
    # flat signals correlate with nothing
    centered = sigs - sigs.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)
    corr[norms == 0, :] = 0.0
    corr[:, norms == 0] = 0.0
    np.fill_diagonal(corr, 1.0)
    return 1.0 - corr


def cluster_select(sigs: np.ndarray, cost_fn=None) -> tuple[int, int, bool]:
    """Pick a representative row from correlation clustering.

    Returns (index, cluster size, flagged). Average linkage on 1 - corr,
    cut where correlation drops below 0.6; the largest cluster wins (ties
    go to the cluster holding the lowest index) and within it the member
    with the highest mean correlation to the others. When every row ends up
    alone the row with the lowest ``cost_fn`` value is returned, flagged.
    """
    n = sigs.shape[0]
    if n == 1:
        return 0, 1, False
    dist = _correlation_distance(sigs)
    z = linkage(squareform(dist, checks=False), method="average")
    labels = fcluster(z, t=1.0 - CLUSTER_MIN_CORR, criterion="distance")
    sizes = np.bincount(labels)
    if sizes.max() == 1:
        pick = 0 if cost_fn is None else int(np.argmin([cost_fn(i) for i in range(n)]))
        return pick, 1, True
    best = [lab for lab in np.unique(labels) if sizes[lab] == sizes.max()]
    lab = min(best, key=lambda b: np.flatnonzero(labels == b)[0])
    members = np.flatnonzero(labels == lab)
    sub = 1.0 - dist[np.ix_(members, members)]
    mean_corr = (sub.sum(axis=1) - 1.0) / (members.size - 1)
    return int(members[np.argmax(mean_corr)]), int(members.size), False


def cluster_extract_detailed(cube: DataCube, center: SpatialPoint, cfg: RadarConfig | None = None) -> ClusterResult:
    cfg = cfg or cube.config
    center = SpatialPoint(*center)
    if center.range_m > cfg.max_range_m:
        raise ValueError(f"center {tuple(center)} is beyond max range")
    spacing = CLUSTER_SPAN_M / (CLUSTER_SIDE - 1)
    pts = _in_range(lattice(center, (CLUSTER_SIDE,) * 3, spacing), cfg)
    series = [point_displacement(cube, p, cfg) for p in pts]
    sigs = np.stack([s.samples for s in series])
    idx, size, flagged = cluster_select(sigs, lambda i: signal_cost(series[i]).cost)
    return ClusterResult(series[idx], pts[idx], size, len(pts), flagged)


def cluster_extract(cube: DataCube, center: SpatialPoint, cfg: RadarConfig | None = None) -> DisplacementSeries:
    """Representative signal of the largest correlated group on a 6x6x6 lattice (span 0.3 m)."""
    return cluster_extract_detailed(cube, center, cfg).signal


_PER_SEGMENT = {
    Method.ACCUMULATE: 2 * 8 * 10,  # chirps x virtual antennas x spatial points
    Method.CLUSTER: CLUSTER_SIDE**3,
}


def evaluation_budget(method: Method | str, n_segments: int = SEGMENTS_PER_MINUTE, traces=None) -> int:
    """Evaluations a method spends on ``n_segments`` 4 s segments.

    For CFT the count is read from the per-segment optimizer states in
    ``traces`` (anything with an ``eval_count``).
    """
    method = Method(method)
    if method is Method.CFT:
        if traces is None:
            raise ValueError("CFT evaluations come from traces")
        return int(sum(t.eval_count for t in traces))
    return _PER_SEGMENT[method] * n_segments
