"""Point-scatterer FMCW beat-signal model shared by simulation and steering.

For a scatterer at range r and direction cosine u = sin(theta), the effective
distance seen by virtual channel v is ``d_v = r + x_v * u / 2`` where x_v is
the element position; the received sample n is then

    exp(+j * (2*pi * (2*k*d_v/c) * n/fs + 4*pi*d_v/lambda))

i.e. a beat tone at 2*k*d_v/c plus the carrier phase term. The x_v*u/2 part
of the carrier phase reproduces the uniform-linear-array progression
2*pi*x_v*u/lambda. Positive exponents are used throughout; steering applies
the conjugate.
"""

from __future__ import annotations

import numpy as np

from .config import RadarConfig, SpatialPoint


def channel_distances(cfg: RadarConfig, point: SpatialPoint) -> np.ndarray:
    """Effective per-channel distance d(E, v), shape (V,)."""
    return point.range_m + cfg.channel_offsets() * point.direction_cosine / 2


def phase_rate(cfg: RadarConfig) -> tuple[np.ndarray, float]:
    """Phase per meter of distance: fast-time slope (per sample) and carrier."""
    n = np.arange(cfg.adc_samples) / cfg.adc_rate_hz
    beat = 2 * np.pi * (2 * cfg.slope_hz_per_s / cfg.light_speed_m_s) * n
    carrier = 4 * np.pi / cfg.wavelength_m
    return beat, carrier


def signature(cfg: RadarConfig, point: SpatialPoint) -> np.ndarray:
    """Noise-free (channel, sample) response of a unit static scatterer."""
    d = channel_distances(cfg, point)
    beat, carrier = phase_rate(cfg)
    return np.exp(1j * (d[:, None] * beat[None, :] + carrier * d[:, None]))


def steering_vector(cfg: RadarConfig, point: SpatialPoint) -> np.ndarray:
    """Flattened conjugate model, ready for ``chirp_sum @ steering``."""
    return np.conj(signature(cfg, point)).ravel().astype(np.complex64)
