"""Uniformly sampled real series and the CSV format used to exchange them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# physical bound on chest-wall excursion
MAX_DISPLACEMENT_M = 0.05


@dataclass(frozen=True)
class DisplacementSeries:
    """Real samples at a fixed rate.

    Used for chest displacement (meters) and for everything derived from it
    downstream (velocity, envelopes). Only raw displacements are held to the
    physical 5 cm bound; pass ``check_bound=False`` for derived quantities.
    """

    samples: np.ndarray
    rate_hz: float
    check_bound: bool = True

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.check_bound and s.size and np.max(np.abs(s)) >= MAX_DISPLACEMENT_M:
            raise ValueError(
                f"displacement {np.max(np.abs(s)):.4f} m exceeds the {MAX_DISPLACEMENT_M} m chest bound"
            )
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.rate_hz

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz

    def derived(self, samples: np.ndarray) -> "DisplacementSeries":
        """New series at the same rate without the displacement bound."""
        return DisplacementSeries(samples, self.rate_hz, check_bound=False)


def write_series_csv(path, times: np.ndarray, values: np.ndarray, value_name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", value_name])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a 2-column (time_s, value) CSV with a header row."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected 2 columns, found {data.shape[1]}")
    return data[:, 0], data[:, 1]


def save_displacement_csv(series: DisplacementSeries, path) -> None:
    write_series_csv(path, series.times, series.samples)


def load_displacement_csv(path, check_bound: bool = False) -> DisplacementSeries:
    t, v = read_series_csv(path)
    if t.size < 2:
        raise ValueError(f"{path}: need at least 2 rows to infer the sample rate")
    rate = 1.0 / float(np.median(np.diff(t)))
    return DisplacementSeries(v, rate, check_bound=check_bound)
