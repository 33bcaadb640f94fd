"""Transient diffusion approximation in an infinite homogeneous medium."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import jit
from .media import Medium

FLUX_MAX = 1e300
_LOG_FLUX_MAX = math.log(FLUX_MAX)


@dataclass(frozen=True)
class DaQuery:
    position: np.ndarray
    emitter_position: np.ndarray
    eval_time: float
    emission_time: float
    medium: Medium


@jit
def da_log_flux_nb(r2, dt, speed, D, sigma_a):
    """log of the diffusion flux at squared distance ``r2`` and elapsed ``dt`` seconds.

    Returns -inf for non-causal queries (dt <= 0).
    """
    if not dt > 0.0:
        return -math.inf
    cdt = speed * dt
    return (math.log(speed) - 1.5 * math.log(4.0 * math.pi * D * cdt)
            - r2 / (4.0 * D * cdt) - sigma_a * cdt)


@jit
def da_flux_nb(r2, dt, speed, D, sigma_a):
    lf = da_log_flux_nb(r2, dt, speed, D, sigma_a)
    if lf == -math.inf:
        return 0.0
    if lf > _LOG_FLUX_MAX:
        return FLUX_MAX
    return math.exp(lf)


@jit
def da_log_flux_len_nb(r2, L, D, sigma_a):
    """Length-domain log flux up to a constant: ``L`` = phase speed * elapsed time."""
    if not L > 0.0:
        return -math.inf
    return -1.5 * math.log(L) - r2 / (4.0 * D * L) - sigma_a * L


def da_flux(query: DaQuery) -> float:
    m = query.medium
    r = np.asarray(query.position, float) - np.asarray(query.emitter_position, float)
    dt = float(query.eval_time) - float(query.emission_time)
    return da_flux_nb(float(r @ r), dt, m.speed, m.D, m.sigma_a)


def causal_valid(position, emitter_position, residual_time: float, medium: Medium) -> bool:
    """Could a straight connection from ``position`` still reach the emitter in time?"""
    if not residual_time > 0.0:
        return False
    dist = float(np.linalg.norm(np.asarray(position, float) - np.asarray(emitter_position, float)))
    return dist <= medium.speed * residual_time
