"""Double-Gaussian heartbeat template.

One beat is modelled as two Gaussian bumps: the dominant first vibration
(ventricular contraction) and a weaker, later second vibration (relaxation).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TemplateParams:
    """Amplitudes a1/a2, centers b1/b2 and widths c1/c2 (seconds)."""

    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("template widths c1, c2 must be positive")
        if not (self.a1 >= self.a2 >= 0):
            raise ValueError("template amplitudes must satisfy a1 >= a2 >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def shifted(self, dt: float) -> "TemplateParams":
        return TemplateParams(self.a1, self.b1 + dt, self.c1, self.a2, self.b2 + dt, self.c2)


def double_gaussian(t, a1, b1, c1, a2, b2, c2):
    """Evaluate a1*exp(-(t-b1)^2/2c1^2) + a2*exp(-(t-b2)^2/2c2^2).

    Broadcasts over all arguments, so batched parameter arrays work.
    """
    t = np.asarray(t, dtype=float)
    return a1 * np.exp(-((t - b1) ** 2) / (2 * c1**2)) + a2 * np.exp(-((t - b2) ** 2) / (2 * c2**2))


def evaluate(params: TemplateParams, t) -> np.ndarray:
    return double_gaussian(t, params.a1, params.b1, params.c1, params.a2, params.b2, params.c2)
