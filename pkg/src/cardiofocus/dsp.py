"""FMCW processing: range/angle FFTs, rough localization, point steering,
phase unwrapping and the band-pass + differentiator cleanup."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .config import RadarConfig, SpatialPoint
from .cube import DataCube
from .model import steering_vector
from .signals import DisplacementSeries


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass(frozen=True)
class RangeProfiles:
    """Range FFT output, shape (frame, chirp, channel, range bin)."""

    profiles: np.ndarray
    fft_size: int
    bin_m: float
    config: RadarConfig


def range_fft(cube: DataCube, fft_size: int | None = None) -> RangeProfiles:
    """FFT along fast time, zero-padded to the next power of two.

    Uses orthonormal scaling, so the profile energy equals the sample energy.
    """
    n = cube.config.adc_samples
    if n < 2:
        raise ValueError("range FFT needs at least 2 ADC samples")
    size = fft_size or _next_pow2(n)
    if size < n:
        raise ValueError(f"fft_size {size} smaller than {n} samples")
    prof = np.fft.fft(cube.samples, n=size, axis=-1, norm="ortho")
    return RangeProfiles(prof, size, cube.config.range_bin_m(size), cube.config)


@dataclass(frozen=True)
class RaMap:
    magnitudes: np.ndarray  # (range bins, angle bins)
    range_axis_m: np.ndarray
    angle_axis_rad: np.ndarray
    range_bin_m: float = 0.0
    sin_bin: float = 0.0  # angle bin spacing in sin(theta)

    def __post_init__(self):
        m = np.asarray(self.magnitudes)
        if m.shape != (self.range_axis_m.size, self.angle_axis_rad.size):
            raise ValueError("magnitude shape does not match axes")
        if np.any(m < 0):
            raise ValueError("magnitudes must be non-negative")
        for name in ("range_axis_m", "angle_axis_rad"):
            ax = getattr(self, name)
            if ax.size > 1 and np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["range_m\\angle_rad"] + [repr(float(a)) for a in self.angle_axis_rad])
            for r, row in zip(self.range_axis_m, self.magnitudes):
                w.writerow([repr(float(r))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "RaMap":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        angles = np.array([float(v) for v in rows[0][1:]])
        body = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(body[:, 1:], body[:, 0], angles)


def angle_fft(profiles: RangeProfiles, frame: int = 0, fft_size: int | None = None) -> RaMap:
    """FFT across virtual channels for one frame, magnitudes averaged over chirps.

    The angle FFT is zero-padded to at least 4V bins. Only bins with
    |sin(theta)| <= 1 and ranges up to the maximum unambiguous range are kept.
    """
    cfg = profiles.config
    v = profiles.profiles.shape[2]
    if v < 2:
        raise ValueError("angle FFT needs at least 2 virtual channels (no AoA capability with V=1)")
    size = fft_size or _next_pow2(4 * v)
    data = profiles.profiles[frame]  # (chirp, channel, range)
    spec = np.fft.fftshift(np.fft.fft(data, n=size, axis=1), axes=1)
    mag = np.abs(spec).mean(axis=0).T  # (range, angle)
    q = np.arange(size) - size // 2
    sin_step = cfg.wavelength_m / (cfg.channel_spacing_m * size)
    sin_theta = q * sin_step
    keep_a = np.abs(sin_theta) <= 1.0
    ranges = np.arange(profiles.fft_size) * profiles.bin_m
    keep_r = ranges <= cfg.max_range_m
    return RaMap(
        mag[np.ix_(keep_r, keep_a)],
        ranges[keep_r],
        np.arcsin(sin_theta[keep_a]),
        range_bin_m=profiles.bin_m,
        sin_bin=sin_step,
    )


def rough_localize(ra: RaMap) -> SpatialPoint:
    """Global RA-map maximum as a 3D point with z = 0."""
    if ra.magnitudes.size == 0:
        raise ValueError("empty RA map")
    if not np.any(ra.magnitudes > 0):
        raise ValueError("no target: RA map is all zero")
    i, j = np.unravel_index(np.argmax(ra.magnitudes), ra.magnitudes.shape)
    r, th = ra.range_axis_m[i], ra.angle_axis_rad[j]
    return SpatialPoint(float(r * np.sin(th)), float(r * np.cos(th)), 0.0)


def localize_cube(cube: DataCube) -> SpatialPoint:
    """Rough body location from the first frame of ``cube``."""
    return rough_localize(angle_fft(range_fft(cube.segment(0, 1))))


@dataclass(frozen=True)
class PointSignal:
    complex_series: np.ndarray
    point: SpatialPoint
    rate_hz: float
    wavelength_m: float

    def to_csv(self, path) -> None:
        t = np.arange(self.complex_series.size) / self.rate_hz
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "value"])
            for ti, z in zip(t, self.complex_series):
                w.writerow([repr(float(ti)), repr(complex(z))])


def extract_point_signal(cube: DataCube, point: SpatialPoint, cfg: RadarConfig | None = None) -> PointSignal:
    """Steer every (chirp, channel, sample) to ``point`` and accumulate per frame."""
    cfg = cfg or cube.config
    point = SpatialPoint(*point)
    if point.range_m > cfg.max_range_m:
        raise ValueError(f"point {tuple(point)} is beyond max range {cfg.max_range_m:.3f} m")
    z = cube.chirp_sum @ steering_vector(cfg, point)
    return PointSignal(z, point, cfg.frame_rate_hz, cfg.wavelength_m)


def unwrap_phase(sig: PointSignal) -> DisplacementSeries:
    """Displacement lambda * dphi / (4 pi), mean removed."""
    z = np.asarray(sig.complex_series)
    if z.size < 2:
        raise ValueError("need at least 2 frames to unwrap")
    phase = np.unwrap(np.angle(z.astype(np.complex128)))
    h = sig.wavelength_m * phase / (4 * np.pi)
    return DisplacementSeries(h - h.mean(), sig.rate_hz, check_bound=False)


BAND_HZ = (0.5, 50.0)


@lru_cache(maxsize=8)
def _bandpass_sos(rate_hz: float) -> np.ndarray:
    # order-2 bandpass design = 4th-order filter as two biquads
    return signal.butter(2, BAND_HZ, btype="bandpass", fs=rate_hz, output="sos")


def bandpass_differentiate(disp: DisplacementSeries) -> DisplacementSeries:
    """Zero-phase 0.5-50 Hz band-pass followed by a central-difference derivative.

    Raises:
        ValueError: if the rate cannot hold a 50 Hz passband edge.
    """
    rate = disp.rate_hz
    if rate <= 2 * BAND_HZ[1]:
        raise ValueError(f"sample rate {rate} Hz too low for a {BAND_HZ[1]} Hz passband")
    x = disp.samples
    if not np.any(x):
        return disp.derived(np.zeros_like(x))
    y = signal.sosfiltfilt(_bandpass_sos(float(rate)), x)
    return disp.derived(np.gradient(y) * rate)


def point_displacement(cube: DataCube, point: SpatialPoint, cfg: RadarConfig | None = None) -> DisplacementSeries:
    """Cleaned cardiac signal at ``point``: extract, unwrap, band-pass, differentiate."""
    return bandpass_differentiate(unwrap_phase(extract_point_signal(cube, point, cfg)))
