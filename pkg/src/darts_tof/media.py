"""Homogeneous scattering medium and the Henyey-Greenstein phase function."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from ._jit import jit

from .geometry import from_local, vdot

SPEED_OF_LIGHT = 299_792_458.0
INV_4PI = 1.0 / (4.0 * math.pi)


@dataclass(frozen=True)
class Medium:
    """Homogeneous medium. Coefficients in 1/m, ``c`` in m/s.

    ``sigma_t`` and the reduced diffusion coefficient ``D`` are derived.
    Scenes may set ``c = 1`` so that times and lengths coincide.
    """

    sigma_s: float
    sigma_a: float
    g: float = 0.0
    eta: float = 1.0
    c: float = SPEED_OF_LIGHT
    sigma_t: float = field(init=False)
    D: float = field(init=False)

    def __post_init__(self):
        if not (self.sigma_s >= 0.0 and self.sigma_a >= 0.0):
            raise ValueError(f"sigma_s and sigma_a must be >= 0 (got {self.sigma_s}, {self.sigma_a})")
        if not -1.0 < self.g < 1.0:
            raise ValueError(f"anisotropy g must lie in (-1, 1), got {self.g}")
        if not self.eta >= 1.0:
            raise ValueError(f"relative refractive index must be >= 1, got {self.eta}")
        if not self.c > 0.0:
            raise ValueError(f"speed of light must be positive, got {self.c}")
        object.__setattr__(self, "sigma_t", self.sigma_s + self.sigma_a)
        reduced = self.sigma_a + self.sigma_s * (1.0 - self.g)
        object.__setattr__(self, "D", 1.0 / (3.0 * reduced) if reduced > 0 else math.inf)

    @property
    def speed(self) -> float:
        """Phase speed c / eta."""
        return self.c / self.eta

    @property
    def albedo(self) -> float:
        return self.sigma_s / self.sigma_t if self.sigma_t > 0 else 0.0

    @property
    def mfp(self) -> float:
        return 1.0 / self.sigma_t if self.sigma_t > 0 else math.inf

    @property
    def tmfp(self) -> float:
        reduced = self.sigma_a + self.sigma_s * (1.0 - self.g)
        return 1.0 / reduced if reduced > 0 else math.inf

    def fingerprint(self) -> tuple[float, float, float, float]:
        return (float(self.sigma_s), float(self.sigma_a), float(self.g), float(self.eta))

    def params(self) -> tuple:
        """Flat tuple consumed by the compiled kernels."""
        return (float(self.sigma_s), float(self.sigma_a), float(self.sigma_t), float(self.g),
                float(self.eta), float(self.speed), float(self.D))


def transmittance(d: float, medium: Medium) -> float:
    if d < 0:
        raise ValueError(f"distance must be non-negative, got {d}")
    return math.exp(-medium.sigma_t * d)


@jit
def hg_eval_nb(cos_angle, g):
    denom = 1.0 + g * g - 2.0 * g * cos_angle
    return INV_4PI * (1.0 - g * g) / (denom * math.sqrt(denom))


@jit
def hg_sample_cos_nb(g, u):
    if abs(g) < 1e-3:
        return 1.0 - 2.0 * u
    s = (1.0 - g * g) / (1.0 - g + 2.0 * g * u)
    return min(1.0, max(-1.0, (1.0 + g * g - s * s) / (2.0 * g)))


@jit
def hg_sample_nb(incoming, g, u1, u2):
    cos_t = hg_sample_cos_nb(g, u1)
    out = from_local(cos_t, 2.0 * math.pi * u2, incoming)
    # pdf from the realised cosine so it matches hg_eval bit for bit
    c = min(1.0, max(-1.0, vdot(incoming, out)))
    return out, hg_eval_nb(c, g)


def hg_eval(cos_angle: float, g: float) -> float:
    """Phase function density (1/sr); ``cos_angle`` is between propagation directions."""
    if abs(cos_angle) > 1.0 + 1e-12:
        raise ValueError(f"cos_angle out of range: {cos_angle}")
    return hg_eval_nb(float(cos_angle), float(g))


def hg_sample(incoming, g: float, u1: float, u2: float) -> tuple[np.ndarray, float]:
    """Draw an outgoing propagation direction; returns ``(direction, pdf)``."""
    inc = tuple(float(x) for x in np.asarray(incoming, dtype=np.float64))
    out, pdf = hg_sample_nb(inc, float(g), float(u1), float(u2))
    return np.array(out), pdf
