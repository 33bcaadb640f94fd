"""Vector math on 3-tuples, rays, and equal-time ellipse geometry.

The compiled helpers operate on plain float tuples so the compiled kernels
never allocate for vector arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from ._jit import jit


class InvalidEllipse(ValueError):
    """Raised when the required path length cannot span the two foci."""


@jit(inline="always")
def vadd(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@jit(inline="always")
def vsub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@jit(inline="always")
def vscale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


@jit(inline="always")
def vmul(a, b):
    return (a[0] * b[0], a[1] * b[1], a[2] * b[2])


@jit(inline="always")
def vmadd(o, d, t):
    return (o[0] + d[0] * t, o[1] + d[1] * t, o[2] + d[2] * t)


@jit(inline="always")
def vdot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@jit(inline="always")
def vcross(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


@jit(inline="always")
def vlen(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


@jit(inline="always")
def vnormalize(a):
    n = vlen(a)
    return (a[0] / n, a[1] / n, a[2] / n)


@jit
def onb(n):
    """Orthonormal tangents for unit ``n`` (Duff et al. 2017)."""
    sign = 1.0 if n[2] >= 0.0 else -1.0
    a = -1.0 / (sign + n[2])
    b = n[0] * n[1] * a
    t = (1.0 + sign * n[0] * n[0] * a, sign * b, -sign * n[0])
    s = (b, sign + n[1] * n[1] * a, -n[1])
    return t, s


@jit
def from_local(cos_t, phi, axis):
    """Unit vector at polar angle ``acos(cos_t)`` and azimuth ``phi`` about ``axis``."""
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    t, s = onb(axis)
    cp = math.cos(phi) * sin_t
    sp = math.sin(phi) * sin_t
    return (t[0] * cp + s[0] * sp + axis[0] * cos_t,
            t[1] * cp + s[1] * sp + axis[1] * cos_t,
            t[2] * cp + s[2] * sp + axis[2] * cos_t)


@jit
def polar_distance_nb(C, S, cos_theta):
    """Distance from the near focus to the ellipse along a ray; -1 if invalid."""
    if S <= C:
        return -1.0
    return (S * S - C * C) / (2.0 * S - 2.0 * C * cos_theta)


def polar_distance(C: float, S: float, cos_theta: float) -> float:
    """Polar distance from the near focus to an ellipse with focal distance ``C``
    and focal-sum ``S``, along a direction at ``cos_theta`` to the major axis."""
    if C < 0 or S <= C:
        raise InvalidEllipse(f"need S > C >= 0, got C={C!r}, S={S!r}")
    if abs(cos_theta) > 1.0 + 1e-12:
        raise ValueError(f"cos_theta out of range: {cos_theta!r}")
    return polar_distance_nb(float(C), float(S), float(cos_theta))


def _as_vec(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(3)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_max: float = math.inf

    def __post_init__(self):
        o, d = _as_vec(self.origin), _as_vec(self.direction)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Hit:
    distance: float
    position: np.ndarray
    normal: np.ndarray
    material: int


@dataclass(frozen=True)
class EllipseParams:
    """Equal-time ellipse with foci at the current vertex and the emitter."""

    focus_near: np.ndarray
    focus_far: np.ndarray
    S: float
    C: float = field(init=False)
    axis: np.ndarray = field(init=False)

    def __post_init__(self):
        near, far = _as_vec(self.focus_near), _as_vec(self.focus_far)
        object.__setattr__(self, "focus_near", near)
        object.__setattr__(self, "focus_far", far)
        delta = far - near
        C = float(np.linalg.norm(delta))
        object.__setattr__(self, "C", C)
        # any axis works for the sphere case
        axis = delta / C if C > 0 else np.array([0.0, 0.0, 1.0])
        object.__setattr__(self, "axis", axis)

    @property
    def valid(self) -> bool:
        return self.S > self.C

    @property
    def ratio(self) -> float:
        return self.C / self.S

    def cos_theta(self, direction) -> float:
        return float(np.clip(np.dot(self.axis, _as_vec(direction)), -1.0, 1.0))

    def frame(self) -> np.ndarray:
        """Rows are (tangent, bitangent, major axis)."""
        t, s = onb(tuple(self.axis))
        return np.array([t, s, self.axis])
