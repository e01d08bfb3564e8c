"""Synthetic scenes and their rendering into FMCW data cubes.

A scene is one cardiac scatterer (heartbeat pulses plus respiration) and a
set of clutter scatterers with their own micro-motion. Every clutter point
that lies within ``cardiac_radius_m`` of the cardiac point moves with the
chest as well; everything outside the radius carries no cardiac motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RadarConfig, SpatialPoint
from .cube import DataCube
from .model import channel_distances, phase_rate
from .signals import DisplacementSeries
from .template import TemplateParams, double_gaussian

MIN_BEAT_GAP_S = 0.33
MAX_BEAT_GAP_S = 2.0
MAX_PULSE_AMPLITUDE_M = 1e-3


@dataclass(frozen=True)
class HeartbeatSchedule:
    beat_times_s: np.ndarray
    rr_jitter_std_s: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.beat_times_s, dtype=float).ravel()
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ValueError("beat times must be strictly increasing")
        if np.any(gaps < MIN_BEAT_GAP_S) or np.any(gaps > MAX_BEAT_GAP_S):
            raise ValueError(
                f"beat gaps must lie in [{MIN_BEAT_GAP_S}, {MAX_BEAT_GAP_S}] s, got {gaps.min():.3f}-{gaps.max():.3f}"
            )
        t.setflags(write=False)
        object.__setattr__(self, "beat_times_s", t)

    def __len__(self) -> int:
        return self.beat_times_s.size

    @classmethod
    def generate(
        cls,
        duration_s: float,
        mean_rr_s: float = 0.8,
        rr_jitter_std_s: float = 0.03,
        rng: Optional[np.random.Generator] = None,
        first_beat_s: Optional[float] = None,
    ) -> "HeartbeatSchedule":
        """Beats from ``first_beat_s`` until ``duration_s`` with Gaussian RR jitter."""
        rng = rng if rng is not None else np.random.default_rng(0)
        t = first_beat_s if first_beat_s is not None else rng.uniform(0.1, mean_rr_s)
        times = []
        while t < duration_s:
            times.append(t)
            rr = mean_rr_s + rr_jitter_std_s * rng.standard_normal()
            t += float(np.clip(rr, MIN_BEAT_GAP_S + 0.05, MAX_BEAT_GAP_S - 0.05))
        return cls(np.array(times), rr_jitter_std_s)


DEFAULT_PULSE = TemplateParams(a1=1e-4, b1=0.0, c1=0.03, a2=5e-5, b2=0.25, c2=0.05)


def synthesize_cardiac_displacement(
    schedule: HeartbeatSchedule,
    pulse: TemplateParams = DEFAULT_PULSE,
    duration_s: float = 4.0,
    rate_hz: float = 200.0,
) -> DisplacementSeries:
    """Superpose one double-Gaussian pulse per beat.

    ``pulse.b1`` and ``pulse.b2`` are offsets from each beat time.
    """
    if len(schedule) == 0:
        raise ValueError("heartbeat schedule is empty")
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    if max(pulse.a1, pulse.a2) > MAX_PULSE_AMPLITUDE_M:
        raise ValueError(f"pulse amplitudes are meters and must not exceed {MAX_PULSE_AMPLITUDE_M}")
    centers = schedule.beat_times_s + pulse.b1
    if centers.size > 1 and np.min(np.diff(centers)) < MIN_BEAT_GAP_S:
        raise ValueError(f"pulse centers closer than {MIN_BEAT_GAP_S} s overlap")
    n = int(round(duration_s * rate_hz))
    t = np.arange(n) / rate_hz
    x = np.zeros(n)
    for beat in schedule.beat_times_s:
        x += double_gaussian(t, pulse.a1, beat + pulse.b1, pulse.c1, pulse.a2, beat + pulse.b2, pulse.c2)
    return DisplacementSeries(x, rate_hz)


def random_walk(n: int, step_std_m: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian random walk used for clutter micro-motion."""
    w = np.cumsum(step_std_m * rng.standard_normal(n))
    return w - w.mean()


@dataclass(frozen=True)
class Scatterer:
    point: SpatialPoint
    reflectivity: float
    displacement: Optional[DisplacementSeries] = None

    def __post_init__(self):
        if self.reflectivity < 0:
            raise ValueError(f"reflectivity of {self.point} must be non-negative")
        object.__setattr__(self, "point", SpatialPoint(*map(float, self.point)))


@dataclass(frozen=True)
class Scene:
    cardiac_point: SpatialPoint
    cardiac_waveform: DisplacementSeries
    cardiac_radius_m: float = 0.05
    clutter: tuple[Scatterer, ...] = ()
    respiration_amp_m: float = 0.0
    respiration_freq_hz: float = 0.25
    phase_noise_std_rad: float = 0.0
    rng_seed: int = 0
    cardiac_reflectivity: float = 1.0
    respiration_phase_rad: float = 0.0
    snr_db: Optional[float] = None
    schedule: Optional[HeartbeatSchedule] = field(default=None, compare=False)

    def __post_init__(self):
        if self.cardiac_radius_m <= 0:
            raise ValueError("cardiac_radius_m must be positive")
        if not 0.1 <= self.respiration_freq_hz <= 0.5:
            raise ValueError("respiration_freq_hz must lie in [0.1, 0.5]")
        if self.cardiac_reflectivity < 0:
            raise ValueError("cardiac_reflectivity must be non-negative")
        if self.phase_noise_std_rad < 0:
            raise ValueError("phase_noise_std_rad must be non-negative")
        object.__setattr__(self, "cardiac_point", SpatialPoint(*map(float, self.cardiac_point)))
        object.__setattr__(self, "clutter", tuple(self.clutter))

    def chest_motion(self, n_frames: int, rate_hz: float) -> np.ndarray:
        """Cardiac waveform plus respiration over ``n_frames`` frames."""
        w = self.cardiac_waveform
        if abs(w.rate_hz - rate_hz) > 1e-9 * rate_hz:
            raise ValueError(f"cardiac waveform rate {w.rate_hz} Hz does not match frame rate {rate_hz} Hz")
        if len(w) < n_frames:
            raise ValueError(f"cardiac waveform has {len(w)} samples, cube needs {n_frames}")
        t = np.arange(n_frames) / rate_hz
        resp = self.respiration_amp_m * np.sin(2 * np.pi * self.respiration_freq_hz * t + self.respiration_phase_rad)
        return w.samples[:n_frames] + resp

    def noise_std(self) -> float:
        """Per-sample complex noise standard deviation."""
        if self.snr_db is not None:
            return self.cardiac_reflectivity / np.sqrt(10 ** (self.snr_db / 10))
        # small-angle: per-sample phase jitter of the cardiac return
        return np.sqrt(2) * self.cardiac_reflectivity * self.phase_noise_std_rad

    def render_list(self, n_frames: int, rate_hz: float) -> list[tuple[SpatialPoint, float, np.ndarray]]:
        """(point, reflectivity, line-of-sight displacement) for every scatterer."""
        chest = self.chest_motion(n_frames, rate_hz)
        out = [(self.cardiac_point, self.cardiac_reflectivity, chest)]
        center = self.cardiac_point.as_array()
        for s in self.clutter:
            if s.displacement is None:
                h = np.zeros(n_frames)
            else:
                if len(s.displacement) < n_frames:
                    raise ValueError(f"clutter at {s.point} has {len(s.displacement)} samples, cube needs {n_frames}")
                h = np.array(s.displacement.samples[:n_frames])
            if np.linalg.norm(s.point.as_array() - center) <= self.cardiac_radius_m:
                h = h + chest
            out.append((s.point, s.reflectivity, h))
        return out

    def to_dict(self) -> dict:
        def series(d: Optional[DisplacementSeries]):
            return None if d is None else {"samples": d.samples.tolist(), "rate_hz": d.rate_hz}

        return {
            "cardiac_point": list(self.cardiac_point),
            "cardiac_waveform": series(self.cardiac_waveform),
            "cardiac_radius_m": self.cardiac_radius_m,
            "clutter": [
                {"point": list(s.point), "reflectivity": s.reflectivity, "displacement": series(s.displacement)}
                for s in self.clutter
            ],
            "respiration_amp_m": self.respiration_amp_m,
            "respiration_freq_hz": self.respiration_freq_hz,
            "respiration_phase_rad": self.respiration_phase_rad,
            "phase_noise_std_rad": self.phase_noise_std_rad,
            "snr_db": self.snr_db,
            "rng_seed": self.rng_seed,
            "cardiac_reflectivity": self.cardiac_reflectivity,
            "beat_times_s": None if self.schedule is None else self.schedule.beat_times_s.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        def series(obj, where):
            if obj is None:
                return None
            try:
                return DisplacementSeries(np.asarray(obj["samples"], dtype=float), float(obj["rate_hz"]))
            except KeyError as exc:
                raise ValueError(f"{where}: missing field {exc.args[0]!r}") from None

        for key in ("cardiac_point", "cardiac_waveform"):
            if key not in d:
                raise ValueError(f"scene: missing required field {key!r}")
        clutter = []
        for i, c in enumerate(d.get("clutter", [])):
            try:
                clutter.append(
                    Scatterer(SpatialPoint(*c["point"]), float(c["reflectivity"]), series(c.get("displacement"), f"clutter[{i}].displacement"))
                )
            except KeyError as exc:
                raise ValueError(f"clutter[{i}]: missing field {exc.args[0]!r}") from None
        beats = d.get("beat_times_s")
        return cls(
            cardiac_point=SpatialPoint(*d["cardiac_point"]),
            cardiac_waveform=series(d["cardiac_waveform"], "cardiac_waveform"),
            cardiac_radius_m=float(d.get("cardiac_radius_m", 0.05)),
            clutter=tuple(clutter),
            respiration_amp_m=float(d.get("respiration_amp_m", 0.0)),
            respiration_freq_hz=float(d.get("respiration_freq_hz", 0.25)),
            respiration_phase_rad=float(d.get("respiration_phase_rad", 0.0)),
            phase_noise_std_rad=float(d.get("phase_noise_std_rad", 0.0)),
            snr_db=d.get("snr_db"),
            rng_seed=int(d.get("rng_seed", 0)),
            cardiac_reflectivity=float(d.get("cardiac_reflectivity", 1.0)),
            schedule=None if beats is None else HeartbeatSchedule(np.asarray(beats, dtype=float)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


_CHUNK_FRAMES = 1000


def simulate_data_cube(scene: Scene, cfg: RadarConfig) -> DataCube:
    """Render ``scene`` into a (frame, chirp, channel, sample) cube.

    Each scatterer contributes ``a * exp(+j(2*pi*(2k d/c) n/fs + 4*pi*d/lambda))``
    per channel, with d its instantaneous per-channel distance, followed by
    complex white Gaussian noise drawn from ``scene.rng_seed``.

    Raises:
        ValueError: if any scatterer lies beyond the unambiguous range.
    """
    nf, nc, nv, ns = cfg.n_frames, cfg.chirps_per_frame, cfg.virtual_channels, cfg.adc_samples
    items = scene.render_list(nf, cfg.frame_rate_hz)
    for point, _, h in items:
        far = point.range_m + np.max(np.abs(h))
        if far > cfg.max_range_m:
            raise ValueError(f"scatterer at {tuple(point)} ({far:.3f} m) is beyond max range {cfg.max_range_m:.3f} m")

    beat, carrier = phase_rate(cfg)
    static = []
    for point, a, h in items:
        if a == 0:
            continue
        d = channel_distances(cfg, point)
        u = a * np.exp(1j * (d[:, None] * beat[None, :] + carrier * d[:, None]))
        static.append((u, h))

    rng = np.random.default_rng(scene.rng_seed)
    sigma = scene.noise_std()
    out = np.empty((nf, nc, nv, ns), dtype=np.complex64)
    for start in range(0, nf, _CHUNK_FRAMES):
        stop = min(nf, start + _CHUNK_FRAMES)
        acc = np.zeros((stop - start, nv, ns), dtype=np.complex128)
        for u, h in static:
            hh = h[start:stop]
            motion = np.exp(1j * (hh[:, None] * beat[None, :] + carrier * hh[:, None]))
            acc += motion[:, None, :] * u[None, :, :]
        out[start:stop] = acc[:, None, :, :]
        if sigma > 0:
            noise = rng.standard_normal((stop - start, nc, nv, ns, 2), dtype=np.float32)
            noise *= np.float32(sigma / np.sqrt(2))
            out[start:stop] += noise.view(np.complex64)[..., 0]
    return DataCube(out, cfg)
