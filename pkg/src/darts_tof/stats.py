"""Chi-square verification suites for every sampling routine."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from ._jit import jit
from .diffusion import da_log_flux_len_nb
from .distance import QRNG_TABLE, ris_distance_nb, trunc_exp_nb
from .eda import EdaTable, eda_pdf_nb, eda_sample_nb
from .elliptical import SURFACE_EVENT, control_vertex_nb, elliptical_pdf_t_nb, polar_limit_nb, t_to_S_nb
from .geometry import polar_distance_nb
from .media import Medium, hg_eval, hg_sample_cos_nb
from .rng import new_state, next_float

ALPHA = 0.01


@dataclass(frozen=True)
class PdfTestResult:
    name: str
    statistic: float
    dof: int
    p_value: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.p_value > ALPHA

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.name:<40s} chi2={self.statistic:10.2f} "
                f"dof={self.dof:3d} p={self.p_value:.4g} n={self.n_samples}")


def chi_square(counts, probs, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Pearson test of ``counts`` against category probabilities; sparse bins are pooled."""
    counts = np.asarray(counts, float)
    probs = np.asarray(probs, float)
    n = counts.sum()
    if abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError(f"category probabilities sum to {probs.sum()}")
    exp = probs * n
    if np.any((probs == 0) & (counts > 0)):
        return math.inf, max(len(counts) - 1, 0), 0.0
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_m:
            obs_m[-1] += acc_o
            exp_m[-1] += acc_e
        else:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
    obs_m = np.array(obs_m)
    exp_m = np.array(exp_m)
    if np.any((exp_m == 0) & (obs_m > 0)):
        return math.inf, len(exp_m) - 1, 0.0
    if len(exp_m) < 2:
        return 0.0, 0, 1.0
    stat = float(np.sum((obs_m - exp_m) ** 2 / exp_m))
    dof = len(exp_m) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


def _quantile_edges(cdf: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n_bins: int) -> np.ndarray:
    grid = np.linspace(lo, hi, 4097)
    c = cdf(grid)
    c = c / c[-1]
    edges = np.interp(np.linspace(0, 1, n_bins + 1), c, grid)
    edges[0], edges[-1] = lo, hi
    return np.unique(edges)


def check_continuous(name: str, samples: np.ndarray, density: Callable[[float], float], lo: float, hi: float,
                    n_bins: int = 32, points=None) -> PdfTestResult:
    """Samples on [lo, hi] against an (unnormalised) density, binned by quadrature."""
    def mass(a, b):
        return integrate.quad(density, a, b, limit=200, points=[p for p in (points or []) if a < p < b] or None,
                              epsabs=0.0, epsrel=1e-10)[0]

    coarse = np.linspace(lo, hi, 257)
    cm = np.concatenate([[0.0], np.cumsum([mass(a, b) for a, b in zip(coarse[:-1], coarse[1:])])])
    edges = _quantile_edges(lambda x: np.interp(x, coarse, cm), lo, hi, n_bins)
    probs = np.array([mass(a, b) for a, b in zip(edges[:-1], edges[1:])])
    probs /= probs.sum()
    counts, _ = np.histogram(samples, bins=edges)
    stat, dof, p = chi_square(counts, probs)
    if np.any(samples < lo) or np.any(samples > hi):
        p = 0.0
    return PdfTestResult(name, stat, dof, p, len(samples))


# -- Henyey-Greenstein ----------------------------------------------------------

@jit
def _hg_batch(g, n, seed):
    st = new_state(seed, 0x4647, 0)
    out = np.empty(n)
    for i in range(n):
        out[i] = hg_sample_cos_nb(g, next_float(st))
    return out


def suite_hg(g: float = 0.5, n: int = 1_000_000, seed: int = 1) -> PdfTestResult:
    cos = _hg_batch(float(g), n, np.uint64(seed))
    return check_continuous(f"hg g={g}", cos, lambda c: 2 * math.pi * hg_eval(c, g), -1.0, 1.0, 64)


# -- DA distance sampling ----------------------------------------------------------

@dataclass(frozen=True)
class DistanceCase:
    origin: tuple
    direction: tuple
    emitter: tuple
    d_max: float
    residual_length: float

    def target(self, medium: Medium) -> Callable[[float], float]:
        """Unnormalised transmittance-times-flux density along the ray (length form)."""
        o, w, xe = (np.asarray(v, float) for v in (self.origin, self.direction, self.emitter))

        def f(d):
            p = o + w * d - xe
            lf = da_log_flux_len_nb(float(p @ p), self.residual_length - d, medium.D, medium.sigma_a)
            if lf == -math.inf or float(p @ p) > (self.residual_length - d) ** 2:
                return 0.0
            return medium.sigma_t * math.exp(-medium.sigma_t * d + lf - self.log_scale(medium))
        return f

    def log_scale(self, medium: Medium) -> float:
        # keeps the quadrature in a sane floating-point range
        return -1.5 * math.log(max(self.residual_length, 1e-300))

    def p_c(self, medium: Medium) -> float:
        return -math.expm1(-medium.sigma_t * self.d_max) if math.isfinite(self.d_max) else 1.0


@jit
def _ris_batch(o, w, p_c, sigma_t, xe, res_len, D, sigma_a, table, n_ris, n, seed, out_d, out_r, out_ok):
    st = new_state(seed, 0xD15, 0)
    bufd = np.empty(n_ris)
    bufl = np.empty(max(n_ris, table.shape[1]))
    for i in range(n):
        d, r, ok = ris_distance_nb(o, w, p_c, sigma_t, xe, res_len, 1.0, D, sigma_a, table, n_ris, st, bufd, bufl)
        out_d[i] = d
        out_r[i] = r
        out_ok[i] = ok


def ris_draws(case: DistanceCase, medium: Medium, n: int, n_ris: int, seed: int = 0):
    d = np.empty(n)
    r = np.empty(n)
    ok = np.empty(n, dtype=np.bool_)
    _ris_batch(tuple(map(float, case.origin)), tuple(map(float, case.direction)), case.p_c(medium), medium.sigma_t,
               tuple(map(float, case.emitter)), float(case.residual_length), medium.D, medium.sigma_a, QRNG_TABLE,
               int(n_ris), n, np.uint64(seed), d, r, ok)
    return d, r, ok


def _case_points(case: DistanceCase) -> list:
    o, w, xe = (np.asarray(v, float) for v in (case.origin, case.direction, case.emitter))
    return [float(np.clip((xe - o) @ w, 0.0, case.d_max))]


def suite_da_distance(case: DistanceCase, medium: Medium, n: int = 100_000, n_ris: int = 256, seed: int = 2,
                      name: str = "da distance") -> PdfTestResult:
    d, _, ok = ris_draws(case, medium, n, n_ris, seed)
    return check_continuous(f"{name} (N={n_ris})", d[ok], case.target(medium), 0.0, min(case.d_max,
                           case.residual_length), 24, points=_case_points(case))


def ris_unbiasedness(case: DistanceCase, medium: Medium, h: Callable[[np.ndarray], np.ndarray], n: int = 1_000_000,
                     n_ris: int = 8, seed: int = 3) -> tuple[float, float, float]:
    """Returns ``(estimate, standard error, quadrature reference)`` of the integral of h * target."""
    d, r, ok = ris_draws(case, medium, n, n_ris, seed)
    f = case.target(medium)
    # contribution weight (1/N) sum_i w_i expressed through the selected flux ratio
    tgt = np.array([f(x) for x in d[ok]])
    vals = np.zeros(n)
    vals[ok] = h(d[ok]) * tgt / (medium.sigma_t * np.exp(-medium.sigma_t * d[ok]) / case.p_c(medium)) * r[ok]
    ref = integrate.quad(lambda x: h(np.array([x]))[0] * f(x), 0.0, min(case.d_max, case.residual_length), limit=400,
                         points=_case_points(case), epsabs=0.0, epsrel=1e-11)[0]
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)), ref


def default_distance_cases() -> list[DistanceCase]:
    return [
        DistanceCase((0, 0, 0), (0, 0, 1), (0, 0.3, 0.4), 2.0, 1.5),
        DistanceCase((0, 0, 0), (1, 0, 0), (0, 0, 0.3), 0.8, 1.2),
        DistanceCase((0.2, 0, 0), (0, 1, 0), (0.2, 0.5, 0.1), math.inf, 1.0),
        DistanceCase((0, 0, 0), (0, 0, -1), (0, 0, 0.5), 1.5, 0.9),
        DistanceCase((0, 0, 0), (0.6, 0.8, 0), (0.5, 0.5, 0.2), 1.0, 1.5),
    ]


def default_medium() -> Medium:
    return Medium(4.0, 0.2, 0.3, 1.0, c=1.0)


# -- EDA direction sampling -------------------------------------------------------------

@jit
def _eda_batch(ea, C, S, n, seed):
    st = new_state(seed, 0xEDA, 0)
    out = np.empty(n)
    for i in range(n):
        ct, _, _, _ = eda_sample_nb(ea, C, S, next_float(st), next_float(st))
        out[i] = ct
    return out


def suite_eda(table: EdaTable, C: float, S: float, n: int = 200_000, seed: int = 4) -> PdfTestResult:
    """Sampled cos theta against the queried pdf, binned on the table's own angular grid."""
    ea = table.arrays()
    cos = _eda_batch(ea, float(C), float(S), n, np.uint64(seed))
    n_a = table.config.angular_bins
    edges = np.linspace(-1, 1, n_a + 1)
    probs = np.array([eda_pdf_nb(ea, float(C), float(S), 0.5 * (a + b))[0] for a, b in zip(edges[:-1], edges[1:])])
    probs = probs * 2 * math.pi * (2.0 / n_a)
    counts, _ = np.histogram(cos, bins=edges)
    stat, dof, p = chi_square(counts, probs / probs.sum())
    if abs(probs.sum() - 1) > 1e-9:
        p = 0.0
    return PdfTestResult(f"eda C/S={C / S:.2f} S={S:.3g}", stat, dof, p, n)


# -- elliptical control vertex ---------------------------------------------------------

@dataclass(frozen=True)
class EllipseCase:
    xk: tuple
    w: tuple
    xe: tuple
    S_m: float
    S_M: float
    t_s: float = math.inf
    t_surf: float = 0.25

    @property
    def C(self) -> float:
        return float(np.linalg.norm(np.subtract(self.xe, self.xk)))

    @property
    def cos(self) -> float:
        d = np.subtract(self.xe, self.xk)
        return float(np.dot(self.w, d) / np.linalg.norm(d))


@jit
def _ell_batch(xk, w, xe, S_m, S_M, t_s, sigma_t, t_surf, n, seed, out_t, out_ev, out_ok):
    st = new_state(seed, 0xE11, 0)
    for i in range(n):
        ok, ev, t, S, pdf = control_vertex_nb(xk, w, xe, S_m, S_M, t_s, sigma_t, True, t_surf,
                                              next_float(st), next_float(st))
        out_t[i] = t
        out_ev[i] = ev
        out_ok[i] = ok


def ellipse_draws(case: EllipseCase, sigma_t: float, n: int, seed: int = 5):
    t = np.empty(n)
    ev = np.empty(n, dtype=np.int64)
    ok = np.empty(n, dtype=np.bool_)
    _ell_batch(tuple(map(float, case.xk)), tuple(map(float, case.w)), tuple(map(float, case.xe)), float(case.S_m),
               float(case.S_M), float(case.t_s), float(sigma_t), float(case.t_surf), n, np.uint64(seed), t, ev, ok)
    return t, ev, ok


@jit
def _ell_len_batch(xk, w, xe, S_m, S_M, sigma_t, n, seed, out_t, out_S, out_ok):
    st = new_state(seed, 0xE12, 0)
    for i in range(n):
        ok, _, t, S, _ = control_vertex_nb(xk, w, xe, S_m, S_M, math.inf, sigma_t, False, 1.0,
                                           next_float(st), next_float(st))
        out_t[i] = t
        out_S[i] = S
        out_ok[i] = ok


def length_control(case: EllipseCase, sigma_t: float, n: int, seed: int = 7) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Case-I draws: returns ``(S, segment_sum, ok)`` where the segment sum is
    recomputed from the placed control vertex."""
    t = np.empty(n)
    S = np.empty(n)
    ok = np.empty(n, dtype=np.bool_)
    _ell_len_batch(tuple(map(float, case.xk)), tuple(map(float, case.w)), tuple(map(float, case.xe)),
                   float(case.S_m), float(case.S_M), float(sigma_t), n, np.uint64(seed), t, S, ok)
    xk, w, xe = (np.asarray(v, float) for v in (case.xk, case.w, case.xe))
    x = xk + t[:, None] * w
    seg = np.linalg.norm(x - xk, axis=1) + np.linalg.norm(xe - x, axis=1)
    return S, seg, ok


def pdf_t_normalization(C: float, cos_theta: float, S_m: float, S_M: float, sigma_t: float) -> float:
    """Integral over the polar distance t of the control-vertex density (should be 1)."""
    lo = max(S_m, C)
    t_lo = polar_limit_nb(C, lo, cos_theta)
    t_hi = polar_distance_nb(C, S_M, cos_theta)

    def dens(t):
        return elliptical_pdf_t_nb(t_to_S_nb(t, C, cos_theta), C, cos_theta, sigma_t, lo, S_M)

    mid = 0.5 * (t_lo + t_hi)
    return sum(integrate.quad(dens, a, b, epsabs=0.0, epsrel=1e-12, limit=400)[0]
               for a, b in ((t_lo, mid), (mid, t_hi)))


def random_ellipse_configs(n: int = 10, seed: int = 11) -> list[tuple[float, float, float, float, float]]:
    """``(C, cos_theta, S_m, S_M, sigma_t)`` tuples covering S_m below and above C."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        C = float(rng.uniform(0.05, 2.0))
        ct = float(rng.uniform(-1.0, 1.0))
        S_m = float(C * rng.uniform(0.5, 1.5))
        S_M = float(max(S_m, C) + rng.uniform(0.05, 3.0))
        out.append((C, ct, S_m, S_M, float(rng.uniform(0.1, 10.0))))
    return out


def suite_elliptical(case: EllipseCase, sigma_t: float, n: int = 200_000, seed: int = 5) -> PdfTestResult:
    """Control-vertex distance t against the analytic pdf (with a surface category in case II)."""
    t, ev, ok = ellipse_draws(case, sigma_t, n, seed)
    C, ct = case.C, case.cos
    lo = max(case.S_m, C)
    t_lo = polar_limit_nb(C, lo, ct)
    surface = math.isfinite(case.t_s) and case.t_s < polar_distance_nb(C, case.S_M, ct)
    hi_S = min(case.S_M, t_to_S_nb(case.t_s, C, ct)) if surface else case.S_M
    t_hi = polar_distance_nb(C, hi_S, ct)

    def dens(x):
        return elliptical_pdf_t_nb(t_to_S_nb(x, C, ct), C, ct, sigma_t, lo, hi_S)

    edges = np.linspace(t_lo, t_hi, 33)
    probs = np.array([integrate.quad(dens, a, b, epsabs=0.0, epsrel=1e-10, limit=200)[0]
                      for a, b in zip(edges[:-1], edges[1:])])
    med = ok & (ev != SURFACE_EVENT)
    counts, _ = np.histogram(t[med], bins=edges)
    p_med = 1.0
    if surface:
        S_surf = t_to_S_nb(case.t_s, C, ct)
        surf_in = case.S_m <= S_surf < case.S_M
        t_vol = case.t_s
        p_med = 1.0 if not surf_in else t_vol / (t_vol + case.t_surf)
        probs = np.append(probs * p_med, 1.0 - p_med)
        counts = np.append(counts, np.sum(ok & (ev == SURFACE_EVENT) & (t == case.t_s)))
    n_valid = int(ok.sum())
    stat, dof, p = chi_square(counts, probs / probs.sum())
    if counts.sum() != n_valid or abs(probs.sum() - 1.0) > 1e-6:
        p = 0.0
    return PdfTestResult(f"elliptical {'case II' if surface else 'case I'} C={C:.2f}", stat, dof, p, n_valid)


# -- negative control ---------------------------------------------------------------

def negative_control(n: int = 20_000, sigma_t: float = 2.0, d_max: float = 2.0, seed: int = 6) -> PdfTestResult:
    """A rigged uniform sampler tested against a truncated-exponential target; must fail."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, d_max, n)
    return check_continuous("negative control (uniform vs exp)", d, lambda x: math.exp(-sigma_t * x), 0.0, d_max, 32)


def positive_control(n: int = 20_000, sigma_t: float = 2.0, d_max: float = 2.0, seed: int = 6) -> PdfTestResult:
    rng = np.random.default_rng(seed)
    p_c = -math.expm1(-sigma_t * d_max)
    d = np.array([trunc_exp_nb(sigma_t, p_c, u) for u in rng.random(n)])
    return check_continuous("truncated exponential sampler", d, lambda x: math.exp(-sigma_t * x), 0.0, d_max, 32)


def default_ellipse_cases() -> list[EllipseCase]:
    return [
        EllipseCase((0, 0, 0), (0, 0, 1), (0, 0.5, 0.5), 1.0, 2.5),
        EllipseCase((0, 0, 0), (1, 0, 0), (0.3, 0, 0), 0.2, 0.9),
        EllipseCase((0, 0, 0), (0, -1, 0), (0, 1, 0), 1.5, 4.0),
        EllipseCase((0, 0, 0), (0, 0, 1), (0, 0.5, 0.5), 0.5, 2.5, t_s=0.6),
    ]


def run_all(table: Optional[EdaTable] = None, medium: Optional[Medium] = None, quick: bool = False) -> list[PdfTestResult]:
    """Full suite used by the ``pdftest`` command."""
    medium = medium or default_medium()
    scale = 10 if quick else 1
    res = [suite_hg(g, 1_000_000 // scale) for g in (-0.7, 0.0, 0.5, 0.9)]
    res += [suite_da_distance(c, medium, 100_000 // scale, name=f"da distance #{i}")
            for i, c in enumerate(default_distance_cases())]
    res += [suite_elliptical(c, medium.sigma_t, 200_000 // scale) for c in default_ellipse_cases()]
    if table is not None:
        S0 = math.sqrt(table.s_min * table.s_max)
        res += [suite_eda(table, r * S0, S0, 200_000 // scale) for r in (0.1, 0.5, 0.9)]
    res.append(positive_control())
    return res
