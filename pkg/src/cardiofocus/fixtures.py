"""Seeded synthetic scenes and landscapes used by tests, benchmarks and the CLI.

A default fixture places a strong torso reflector (which the RA map picks
as the rough location) and a weaker cardiac scatterer 0.1-0.3 m away, plus
background clutter. Offsets are drawn by rejection so that neither the torso
nor any clutter point leaks enough energy into the cardiac point to mask it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cft import SearchSpace
from .config import RadarConfig, SpatialPoint, compact_config
from .cube import DataCube
from .model import signature
from .scene import (
    DEFAULT_PULSE,
    HeartbeatSchedule,
    Scatterer,
    Scene,
    random_walk,
    synthesize_cardiac_displacement,
)
from .signals import DisplacementSeries

TORSO_REFLECTIVITY = 1.0
CARDIAC_REFLECTIVITY = 0.5
TORSO_STEP_M = 5e-6
CLUTTER_STEP_M = 2e-6
NOISE_FRACTION = 0.1  # per-sample noise std relative to the cardiac amplitude
RESPIRATION_AMP_M = 3e-4
MAX_TORSO_LEAKAGE = 0.1
MAX_CLUTTER_LEAKAGE = 0.05


@dataclass(frozen=True)
class CardiacFixture:
    scene: Scene
    config: RadarConfig
    torso_point: SpatialPoint  # where the RA map should peak
    cardiac_point: SpatialPoint
    schedule: HeartbeatSchedule
    seed: int

    @property
    def offset_m(self) -> float:
        return float(np.linalg.norm(self.cardiac_point.as_array() - self.torso_point.as_array()))

    def cube(self) -> DataCube:
        from .scene import simulate_data_cube

        return simulate_data_cube(self.scene, self.config)


def leakage(cfg: RadarConfig, a: SpatialPoint, b: SpatialPoint) -> float:
    """Normalized steering overlap |<s_a, s_b>| / (V N) between two static points."""
    sa, sb = signature(cfg, a), signature(cfg, b)
    return float(np.abs(np.vdot(sa, sb)) / sa.size)


def _sample_offset(rng, lo, hi, half_extents):
    he = np.asarray(half_extents)
    reach = float(np.linalg.norm(he * [1.0, 1.0, 0.25]))
    if lo > reach or lo > hi:
        raise ValueError(f"offset range [{lo}, {hi}] m is not reachable inside the search box (max {reach:.3f} m)")
    while True:
        v = rng.uniform(-he, he)
        v[2] *= 0.25  # elevation is barely observable with a linear array
        n = np.linalg.norm(v)
        if lo <= n <= hi:
            return v


def default_fixture(
    seed: int,
    duration_s: float = 4.0,
    offset_range_m: tuple[float, float] = (0.1, 0.3),
    cfg: Optional[RadarConfig] = None,
    n_clutter: int = 32,
) -> CardiacFixture:
    """Torso, cardiac scatterer and background clutter for one seed.

    Args:
        seed: drives every random choice, including the noise.
        duration_s: scene length; the config's frame count follows it.
        offset_range_m: allowed distance between torso and cardiac point.
        cfg: radar config; defaults to the compact configuration.
        n_clutter: number of background clutter scatterers.
    """
    rng = np.random.default_rng(seed)
    base = cfg or compact_config()
    rate = base.frame_rate_hz
    n_frames = int(round(duration_s * rate))
    cfg = RadarConfig(**{**base.to_dict(), "n_frames": n_frames})
    omega_half = SearchSpace((0, 0, 0)).half_extents

    r0 = rng.uniform(0.6, 0.9)
    th0 = rng.uniform(-0.2, 0.2)
    torso = SpatialPoint(r0 * np.sin(th0), r0 * np.cos(th0), 0.0)
    for _ in range(10_000):
        off = _sample_offset(rng, *offset_range_m, omega_half)
        cardiac = SpatialPoint.from_array(torso.as_array() + off)
        if cardiac.range_m < cfg.max_range_m - 0.1 and leakage(cfg, torso, cardiac) < MAX_TORSO_LEAKAGE:
            break
    else:  # pragma: no cover - geometry always admits an offset
        raise RuntimeError("could not place the cardiac point")

    clutter = [
        Scatterer(torso, TORSO_REFLECTIVITY, DisplacementSeries(random_walk(n_frames, TORSO_STEP_M, rng), rate, check_bound=False))
    ]
    while len(clutter) < n_clutter + 1:
        r = rng.uniform(0.3, cfg.max_range_m - 0.1)
        th = rng.uniform(-1.0, 1.0)
        p = SpatialPoint(r * np.sin(th), r * np.cos(th), rng.uniform(-0.1, 0.1))
        a = rng.uniform(0.1, 0.4)
        if a * leakage(cfg, p, cardiac) >= MAX_CLUTTER_LEAKAGE:
            continue
        if np.linalg.norm(p.as_array() - cardiac.as_array()) <= 0.05:
            continue
        walk = DisplacementSeries(random_walk(n_frames, CLUTTER_STEP_M, rng), rate, check_bound=False)
        clutter.append(Scatterer(p, a, walk))

    schedule = HeartbeatSchedule.generate(duration_s, rng=rng)
    wave = synthesize_cardiac_displacement(schedule, DEFAULT_PULSE, duration_s, rate)
    scene = Scene(
        cardiac_point=cardiac,
        cardiac_waveform=wave,
        clutter=tuple(clutter),
        respiration_amp_m=RESPIRATION_AMP_M,
        respiration_phase_rad=float(rng.uniform(0, 2 * np.pi)),
        cardiac_reflectivity=CARDIAC_REFLECTIVITY,
        snr_db=float(-20 * np.log10(NOISE_FRACTION)),
        rng_seed=seed,
        schedule=schedule,
    )
    return CardiacFixture(scene, cfg, torso, cardiac, schedule, seed)


def far_offset_fixture(seed: int, duration_s: float = 4.0, **kwargs) -> CardiacFixture:
    """Cardiac point at least 0.2 m from the rough location."""
    return default_fixture(seed, duration_s, offset_range_m=(0.2, 0.3), **kwargs)


def jump_cube(fixture: CardiacFixture, jump_s: float, jump: np.ndarray) -> tuple[DataCube, SpatialPoint]:
    """Cube where the cardiac scatterer moves by ``jump`` (meters) at ``jump_s``.

    Clutter, heartbeat and noise stay continuous; only the cardiac location
    changes. Returns the cube and the new cardiac point.
    """
    from dataclasses import replace

    from .scene import simulate_data_cube

    cfg = fixture.config
    k = int(round(jump_s * cfg.frame_rate_hz))
    if not 0 < k < cfg.n_frames:
        raise ValueError("jump must fall inside the scene")
    new_point = SpatialPoint.from_array(fixture.cardiac_point.as_array() + np.asarray(jump, dtype=float))

    def part(scene: Scene, start: int, stop: int, point: SpatialPoint, seed: int) -> DataCube:
        def cut(d: DisplacementSeries) -> DisplacementSeries:
            return DisplacementSeries(d.samples[start:stop], d.rate_hz, check_bound=False)

        s = replace(
            scene,
            cardiac_point=point,
            cardiac_waveform=cut(scene.cardiac_waveform),
            clutter=tuple(Scatterer(c.point, c.reflectivity, None if c.displacement is None else cut(c.displacement)) for c in scene.clutter),
            respiration_phase_rad=scene.respiration_phase_rad + 2 * np.pi * scene.respiration_freq_hz * start / cfg.frame_rate_hz,
            rng_seed=seed,
        )
        return simulate_data_cube(s, RadarConfig(**{**cfg.to_dict(), "n_frames": stop - start}))

    a = part(fixture.scene, 0, k, fixture.cardiac_point, fixture.seed)
    b = part(fixture.scene, k, cfg.n_frames, new_point, fixture.seed + 1)
    return DataCube(np.concatenate([a.samples, b.samples]), cfg), new_point


def two_basin_landscape(seed: int, center=(0.5, 0.5, 0.5)) -> tuple[Callable, np.ndarray, np.ndarray]:
    """Cost with a shallow local basin 0.15 m and the global basin 0.35 m from ``center``.

    Returns (cost, local minimizer, global minimizer). The local basin has
    floor 0.3; the global one reaches 0.
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    c = np.asarray(center, dtype=float)
    local, glob = c + 0.15 * u, c - 0.35 * u

    def cost(p) -> float:
        p = np.asarray(p, dtype=float)
        return float(min(0.3 + np.linalg.norm(p - local), 3.0 * np.linalg.norm(p - glob)))

    return cost, local, glob


TWO_BASIN_HALF_EXTENTS = (0.4, 0.4, 0.4)


def two_basin_space(center=(0.5, 0.5, 0.5)) -> SearchSpace:
    """Search box for ``two_basin_landscape``, wide enough to hold both basins."""
    return SearchSpace(SpatialPoint(*center), TWO_BASIN_HALF_EXTENTS)
