"""Radar data cube and its binary file format.

File layout (little-endian), 64-byte header then payload::

    0   8s   magic b"CFCUBE01"
    8   4xu32 frames, chirps, channels, samples
    24  f64  frame rate (Hz)
    32  f64  ADC rate (Hz)
    40  f64  chirp slope (Hz/s)
    48  f64  wavelength (m)
    56  f64  channel spacing (m)
    64  f32  interleaved (real, imag), (frame, chirp, channel, sample) row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .config import RadarConfig

MAGIC = b"CFCUBE01"
_HEADER = struct.Struct("<8s4I5d")
HEADER_SIZE = _HEADER.size  # 64


@dataclass(frozen=True, eq=False)
class DataCube:
    """Complex baseband samples indexed (frame, chirp, channel, ADC sample)."""

    samples: np.ndarray
    config: RadarConfig

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 4:
            raise ValueError(f"cube must be 4-D (frame, chirp, channel, sample), got shape {s.shape}")
        cfg = self.config
        expected = (cfg.chirps_per_frame, cfg.virtual_channels, cfg.adc_samples)
        if s.shape[1:] != expected:
            raise ValueError(f"cube shape {s.shape[1:]} does not match config {expected}")
        if s.dtype != np.complex64:
            s = s.astype(np.complex64)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if cfg.n_frames != s.shape[0]:
            object.__setattr__(self, "config", replace(cfg, n_frames=s.shape[0]))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.samples.shape

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def frame_rate_hz(self) -> float:
        return self.config.frame_rate_hz

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate_hz

    @cached_property
    def chirp_sum(self) -> np.ndarray:
        """Samples summed over chirps, flattened to (frame, channel*sample).

        Every chirp of a frame sees the same quasi-static scene, so steering
        only needs the chirp-accumulated data.
        """
        f, c, v, n = self.samples.shape
        return self.samples.sum(axis=1, dtype=np.complex64).reshape(f, v * n)

    def segment(self, start: int, stop: int) -> "DataCube":
        return DataCube(self.samples[start:stop], self.config)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataCube):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.samples, other.samples)

    def to_bytes(self) -> bytes:
        cfg = self.config
        header = _HEADER.pack(
            MAGIC,
            *self.samples.shape,
            cfg.frame_rate_hz,
            cfg.adc_rate_hz,
            cfg.slope_hz_per_s,
            cfg.wavelength_m,
            cfg.channel_spacing_m,
        )
        payload = np.ascontiguousarray(self.samples).view(np.float32).astype("<f4", copy=False)
        return header + payload.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, **config_overrides) -> "DataCube":
        if len(data) < HEADER_SIZE:
            raise ValueError("truncated cube file: header incomplete")
        magic, nf, nc, nv, ns, frame_rate, adc_rate, slope, wavelength, spacing = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        count = nf * nc * nv * ns
        if len(data) != HEADER_SIZE + count * 8:
            raise ValueError(f"payload size mismatch: expected {count * 8} bytes, found {len(data) - HEADER_SIZE}")
        flat = np.frombuffer(data, dtype="<f4", offset=HEADER_SIZE, count=2 * count)
        samples = flat.view(np.complex64).reshape(nf, nc, nv, ns)
        params = dict(
            wavelength_m=wavelength,
            slope_hz_per_s=slope,
            adc_samples=ns,
            adc_rate_hz=adc_rate,
            chirps_per_frame=nc,
            virtual_channels=nv,
            channel_spacing_m=spacing,
            frame_period_s=1.0 / frame_rate,
            n_frames=nf,
        )
        params.update(config_overrides)
        return cls(samples.copy(), RadarConfig(**params))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path, **config_overrides) -> "DataCube":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), **config_overrides)
