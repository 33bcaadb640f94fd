"""Free-path distance sampling by resampling truncated-exponential candidates
against transmittance times the transient diffusion flux."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from ._jit import jit
from .diffusion import da_flux_nb, da_log_flux_len_nb
from .media import Medium
from .rng import next_float

N_RIS = 8


def _build_qrng_table() -> np.ndarray:
    # first 32 points of the unscrambled 8-d Sobol sequence
    pts = qmc.Sobol(d=8, scramble=False).random(32)
    return np.ascontiguousarray(pts, dtype=np.float64)


QRNG_TABLE = _build_qrng_table()
QRNG_TABLE.setflags(write=False)


def sample_scatter_event(d_max: float, medium: Medium, u: float) -> tuple[bool, float]:
    """Bernoulli medium/surface decision; returns ``(is_medium_event, p_m)``."""
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    p_m = -math.expm1(-medium.sigma_t * d_max) if math.isfinite(d_max) else (1.0 if medium.sigma_t > 0 else 0.0)
    return u < p_m, p_m


@jit
def cp_rotate_nb(table, row, eps0, out):
    for j in range(table.shape[1]):
        v = table[row, j] + eps0
        out[j] = v - math.floor(v)


def qrng_row(rng: np.random.Generator, eps0: Optional[float] = None, row: Optional[int] = None) -> np.ndarray:
    """One Cranley-Patterson rotated row of the Sobol table."""
    if row is None:
        row = int(rng.integers(QRNG_TABLE.shape[0]))
    if eps0 is None:
        eps0 = float(rng.random())
    out = np.empty(QRNG_TABLE.shape[1])
    cp_rotate_nb(QRNG_TABLE, row, eps0, out)
    return out


@dataclass(frozen=True)
class DistanceSampleContext:
    ray_origin: np.ndarray
    ray_direction: np.ndarray
    d_max: float
    residual_time: float
    emitter_position: np.ndarray
    medium: Medium

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        d = np.asarray(self.ray_direction, float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")

    @property
    def p_c(self) -> float:
        st = self.medium.sigma_t
        return 1.0 if not math.isfinite(self.d_max) else -math.expm1(-st * self.d_max)

    def position(self, d: float) -> np.ndarray:
        return np.asarray(self.ray_origin, float) + d * np.asarray(self.ray_direction, float)


@dataclass(frozen=True)
class CandidateSet:
    distances: np.ndarray
    candidate_pdfs: np.ndarray
    ris_weights: np.ndarray

    def __len__(self):
        return len(self.distances)


@jit
def trunc_exp_nb(sigma_t, p_c, u):
    return -math.log1p(-p_c * u) / sigma_t


@jit
def target_density_nb(d, o, w, xe, residual_time, sigma_t, speed, D, sigma_a):
    px = o[0] + w[0] * d - xe[0]
    py = o[1] + w[1] * d - xe[1]
    pz = o[2] + w[2] * d - xe[2]
    r2 = px * px + py * py + pz * pz
    res = residual_time - d / speed
    if not res > 0.0 or r2 > (speed * res) ** 2:
        return 0.0
    return sigma_t * math.exp(-sigma_t * d) * da_flux_nb(r2, res, speed, D, sigma_a)


def target_density(d: float, ctx: DistanceSampleContext) -> float:
    """Unnormalised target: transmittance density times the flux at the shifted time."""
    m = ctx.medium
    return target_density_nb(float(d), tuple(np.asarray(ctx.ray_origin, float)),
                             tuple(np.asarray(ctx.ray_direction, float)),
                             tuple(np.asarray(ctx.emitter_position, float)),
                             float(ctx.residual_time), m.sigma_t, m.speed, m.D, m.sigma_a)


def gen_candidates(ctx: DistanceSampleContext, us) -> CandidateSet:
    st = ctx.medium.sigma_t
    if not st > 0:
        raise ValueError("medium sampling requested in a non-extinguishing medium")
    p_c = ctx.p_c
    us = np.asarray(us, dtype=np.float64)
    d = -np.log1p(-p_c * us) / st
    pdf = st * np.exp(-st * d) / p_c
    tgt = np.array([target_density(x, ctx) for x in d])
    return CandidateSet(d, pdf, tgt / pdf)


def ris_resample(candidates: CandidateSet, u: float) -> Optional[tuple[float, float]]:
    """Pick one candidate proportionally to its weight.

    Returns ``(distance, contribution_weight)`` with weight = sum(w) / (N * target),
    or ``None`` when every weight is zero.
    """
    w = np.asarray(candidates.ris_weights, float)
    total = float(w.sum())
    if not total > 0:
        return None
    cdf = np.cumsum(w)
    i = int(np.searchsorted(cdf, u * total, side="right"))
    i = min(i, len(w) - 1)
    while w[i] == 0:  # guard against landing on a zero-width slot through rounding
        i -= 1
    target = w[i] * candidates.candidate_pdfs[i]
    return float(candidates.distances[i]), total / (len(w) * target)


@jit
def ris_distance_nb(o, w, p_c, sigma_t, xe, res_len, tf, D, sigma_a, table, n_ris, st, buf_d, buf_l):
    """Kernel form of candidate generation + resampling in the length domain.

    ``res_len`` is the residual path length at the ray origin and ``tf`` is 1 when
    the segment advances the clock (0 for an unwarped camera segment). Returns
    ``(d, ratio, ok)`` where ``ratio = mean(flux) / flux(selected)``; the medium
    throughput factor is ``albedo * ratio``.
    """
    if n_ris == table.shape[1]:
        row = min(int(next_float(st) * table.shape[0]), table.shape[0] - 1)
        cp_rotate_nb(table, row, next_float(st), buf_l)
        for i in range(n_ris):
            buf_d[i] = trunc_exp_nb(sigma_t, p_c, buf_l[i])
    else:
        for i in range(n_ris):
            buf_d[i] = trunc_exp_nb(sigma_t, p_c, next_float(st))
    lmax = -math.inf
    for i in range(n_ris):
        d = buf_d[i]
        px = o[0] + w[0] * d - xe[0]
        py = o[1] + w[1] * d - xe[1]
        pz = o[2] + w[2] * d - xe[2]
        r2 = px * px + py * py + pz * pz
        L = res_len - tf * d
        if L > 0.0 and r2 <= L * L:
            lf = da_log_flux_len_nb(r2, L, D, sigma_a)
        else:
            lf = -math.inf
        buf_l[i] = lf
        if lf > lmax:
            lmax = lf
    if lmax == -math.inf:
        return 0.0, 0.0, False
    total = 0.0
    for i in range(n_ris):
        v = math.exp(buf_l[i] - lmax) if buf_l[i] > -math.inf else 0.0
        buf_l[i] = v
        total += v
    u = next_float(st) * total
    acc = 0.0
    sel = -1
    for i in range(n_ris):
        if buf_l[i] > 0.0:
            sel = i
            acc += buf_l[i]
            if u < acc:
                break
    return buf_d[sel], total / (n_ris * buf_l[sel]), True
