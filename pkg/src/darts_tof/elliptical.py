"""Control-vertex sampling on equal-time ellipses (exact path-length control)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._jit import jit
from .geometry import polar_distance, polar_distance_nb, vdot, vlen, vsub
from .media import Medium

MEDIUM_EVENT, SURFACE_EVENT = 0, 1


@dataclass(frozen=True)
class TimeWindow:
    """Target interval ``[t_min, t_max)`` of total path time (seconds)."""

    t_min: float
    t_max: float

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError(f"empty time window [{self.t_min}, {self.t_max})")

    def lengths(self, elapsed: float, speed: float) -> tuple[float, float]:
        """Residual path-length bounds ``(S_m, S_M)`` after ``elapsed`` seconds."""
        return speed * (self.t_min - elapsed), speed * (self.t_max - elapsed)


@dataclass(frozen=True)
class ControlVertexSample:
    t: float
    S: float
    position: np.ndarray
    pdf_t: float
    event: str  # "medium" or "surface"
    valid: bool
    branch_prob: float = 1.0

    @classmethod
    def invalid(cls) -> "ControlVertexSample":
        return cls(math.nan, math.nan, np.full(3, math.nan), 0.0, "medium", False, 0.0)


@jit
def sample_S_nb(S_m, S_M, sigma_t, u):
    span = S_M - S_m
    if sigma_t * span < 1e-12:
        return S_m + u * span
    return S_m - math.log1p(-u * (-math.expm1(-sigma_t * span))) / sigma_t


@jit
def pdf_S_nb(S, S_m, S_M, sigma_t):
    if not (S_m <= S < S_M):
        return 0.0
    span = S_M - S_m
    if sigma_t * span < 1e-12:
        return 1.0 / span
    return sigma_t * math.exp(-sigma_t * (S - S_m)) / (-math.expm1(-sigma_t * span))


def sample_S(S_m: float, S_M: float, sigma_t: float, u: float) -> float:
    """Truncated-exponential focal sum on ``[S_m, S_M)``; uniform when ``sigma_t = 0``."""
    if not 0 <= S_m < S_M:
        raise ValueError(f"need 0 <= S_m < S_M, got {S_m}, {S_M}")
    return sample_S_nb(float(S_m), float(S_M), float(sigma_t), float(u))


def pdf_S(S: float, S_m: float, S_M: float, sigma_t: float) -> float:
    return pdf_S_nb(float(S), float(S_m), float(S_M), float(sigma_t))


def s_to_t(S: float, C: float, cos_theta: float) -> float:
    return polar_distance(C, S, cos_theta)


@jit
def t_to_S_nb(t, C, cos_theta):
    """Focal sum of the point at polar distance ``t`` (inverse of the polar form)."""
    return t + math.sqrt(max(0.0, t * t - 2.0 * C * t * cos_theta + C * C))


@jit
def jacobian_t_nb(S, t, C, cos_theta):
    """dS/dt along a fixed direction."""
    return (S - C * cos_theta) / (S - t)


@jit
def elliptical_pdf_t_nb(S, C, cos_theta, sigma_t, S_m, S_M):
    t = polar_distance_nb(C, S, cos_theta)
    if t < 0.0 or not S - t > 0.0:
        return 0.0
    return pdf_S_nb(S, S_m, S_M, sigma_t) * jacobian_t_nb(S, t, C, cos_theta)


def elliptical_pdf_t(S: float, C: float, cos_theta: float, sigma_t: float, S_m: float, S_M: float) -> float:
    """Density over polar distance t of the control vertex whose focal sum is ``S``."""
    if not S > C:
        raise ValueError("need S > C")
    return elliptical_pdf_t_nb(float(S), float(C), float(cos_theta), float(sigma_t), float(S_m), float(S_M))


@jit
def polar_limit_nb(C, S, cos_theta):
    """Polar distance extended continuously to S = C (the apsis C when cos = 1, else 0)."""
    if S > C:
        return polar_distance_nb(C, S, cos_theta)
    return C if cos_theta >= 1.0 else 0.0


@jit
def control_vertex_nb(xk, w, xe, S_m, S_M, t_s, sigma_t, surf_ok, t_surf, u_branch, u_s):
    """Core of the elliptical connection.

    ``t_s`` is the surface distance along ``w`` (inf if none) and ``surf_ok``
    says whether a surface connection there can carry energy. Returns
    ``(valid, event, t, S, pdf)`` where ``pdf`` already includes the discrete
    branch probability (a density in t for medium events, a probability for
    surface events).
    """
    delta = vsub(xe, xk)
    C = vlen(delta)
    if not S_M > C:
        return False, MEDIUM_EVENT, 0.0, 0.0, 0.0
    ct = vdot(w, delta) / C if C > 0.0 else 0.0
    ct = min(1.0, max(-1.0, ct))
    lo = max(S_m, C)
    t_far = polar_distance_nb(C, S_M, ct)
    if t_s >= t_far:
        p_med = 1.0
        hi = S_M
    else:
        S_surf = t_to_S_nb(t_s, C, ct)
        hi = min(S_M, S_surf)
        t_vol = t_s if hi > lo else 0.0
        surf_in = surf_ok and S_surf >= S_m and S_surf < S_M
        if hi <= lo:
            p_med = 0.0
        elif not surf_in:
            p_med = 1.0
        else:
            p_med = t_vol / (t_vol + t_surf)
        if u_branch >= p_med:
            if not surf_in:
                return False, SURFACE_EVENT, 0.0, 0.0, 0.0
            return True, SURFACE_EVENT, t_s, S_surf, 1.0 - p_med
    if not hi > lo:
        return False, MEDIUM_EVENT, 0.0, 0.0, 0.0
    S = sample_S_nb(lo, hi, sigma_t, u_s)
    if not S < hi:
        S = hi * (1.0 - 1e-16)
    t = polar_distance_nb(C, S, ct)
    pdf = p_med * pdf_S_nb(S, lo, hi, sigma_t) * jacobian_t_nb(S, t, C, ct)
    if not pdf > 0.0:
        return False, MEDIUM_EVENT, 0.0, 0.0, 0.0
    return True, MEDIUM_EVENT, t, S, pdf


def sample_control_vertex(x_k, omega, x_e, window: TimeWindow, surface_distance: Optional[float], medium: Medium,
                          rng: np.random.Generator, elapsed_time: float = 0.0, surface_weight: Optional[float] = None,
                          surface_connectable: bool = True) -> ControlVertexSample:
    """Sample a control vertex along the reused direction ``omega``.

    ``surface_weight`` is the chord length given to the surface branch when
    a surface cuts the outer ellipse (defaults to one mean free path).
    """
    xk = np.asarray(x_k, float)
    w = np.asarray(omega, float)
    S_m, S_M = window.lengths(elapsed_time, medium.speed)
    t_s = math.inf if surface_distance is None else float(surface_distance)
    t_surf = medium.mfp if surface_weight is None else float(surface_weight)
    if not math.isfinite(t_surf):
        t_surf = 1.0
    u = rng.random(2)
    ok, event, t, S, pdf = control_vertex_nb(tuple(xk), tuple(w), tuple(np.asarray(x_e, float)), S_m, S_M, t_s,
                                             medium.sigma_t, surface_connectable, t_surf, u[0], u[1])
    if not ok:
        return ControlVertexSample.invalid()
    if event == SURFACE_EVENT:
        return ControlVertexSample(t, S, xk + t * w, pdf, "surface", True, pdf)
    return ControlVertexSample(t, S, xk + t * w, pdf, "medium", True)


def feasible(x_k, x_e, elapsed_time: float, gate_t_max: float, medium: Medium) -> bool:
    """Can the path still finish before ``gate_t_max``? (half-open gate)"""
    dist = float(np.linalg.norm(np.asarray(x_k, float) - np.asarray(x_e, float)))
    return elapsed_time + dist / medium.speed < gate_t_max


@jit
def feasible_nb(x, xe, elapsed, t_max, speed):
    return elapsed + vlen(vsub(x, xe)) / speed < t_max
