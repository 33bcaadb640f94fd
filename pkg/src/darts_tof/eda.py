"""Elliptical diffusion-approximated (EDA) direction sampling.

A 3-D table indexed by (C/S, S, cos theta) stores, for every cell, the
ellipse-chord integral of transmittance times the transient diffusion flux.
Each cell's 256 angular bins form a piecewise-constant pdf over cos theta;
queries mix the four surrounding cells bilinearly (in C/S and log S).
"""

from __future__ import annotations

import io
import math
import struct
from collections import namedtuple
from dataclasses import asdict, dataclass
from typing import Optional

import numba
import numpy as np
from numba import prange

from ._jit import jit
from .geometry import EllipseParams, from_local, vdot, vlen, vsub
from .media import Medium, hg_eval_nb, hg_sample_nb
from .rng import new_state, next_float

MAGIC = b"EDAT"
VERSION = 1
INV_2PI = 1.0 / (2.0 * math.pi)

EdaArrays = namedtuple("EdaArrays", ["pmf", "cdf", "weight_ok", "s_min", "s_max"])


class TableRangeError(ValueError):
    """Query outside the tabulated (C/S, S) domain; callers fall back to phase sampling."""


class FingerprintMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EdaTableConfig:
    ratio_bins: int = 64
    s_bins: int = 64
    angular_bins: int = 256
    s_min_mfp: float = 0.05
    s_max_mfp: float = 50.0
    mc_samples_per_bin: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.angular_bins != 256:
            raise ValueError("the angular axis has 256 bins")
        if self.ratio_bins < 1 or self.s_bins < 2:
            raise ValueError("need ratio_bins >= 1 and s_bins >= 2")
        if not 0 < self.s_min_mfp < self.s_max_mfp:
            raise ValueError("need 0 < s_min_mfp < s_max_mfp")
        if self.mc_samples_per_bin < 1:
            raise ValueError("mc_samples_per_bin must be positive")

    def strata(self) -> tuple[int, int]:
        """(angular, chord) strata per bin."""
        n_c = max(1, int(math.isqrt(self.mc_samples_per_bin)))
        return n_c, max(1, self.mc_samples_per_bin // n_c)


class EdaTable:
    def __init__(self, fingerprint, config: EdaTableConfig, masses: np.ndarray):
        self.fingerprint = tuple(float(x) for x in fingerprint)
        self.config = config
        self.masses = np.ascontiguousarray(masses, dtype=np.float64)
        expected = (config.ratio_bins, config.s_bins, config.angular_bins)
        if self.masses.shape != expected:
            raise ValueError(f"mass array has shape {self.masses.shape}, expected {expected}")
        sigma_t = self.fingerprint[0] + self.fingerprint[1]
        self.s_min = config.s_min_mfp / sigma_t
        self.s_max = config.s_max_mfp / sigma_t
        self.totals = self.masses.sum(axis=2)
        self.empty = ~(self.totals > 0)
        safe = np.where(self.empty, 1.0, self.totals)[..., None]
        self.pmf = np.where(self.empty[..., None], 0.0, self.masses / safe)
        cdf = np.zeros(expected[:2] + (expected[2] + 1,))
        cdf[..., 1:] = np.cumsum(self.pmf, axis=2)
        # exact terminal value so inverse transform never runs off the end
        cdf[..., -1] = np.where(self.empty, 0.0, 1.0)
        cdf[..., 1:-1] = np.minimum(cdf[..., 1:-1], cdf[..., -1:])
        self.cdf = cdf

    @property
    def ratio_nodes(self) -> np.ndarray:
        return np.arange(self.config.ratio_bins) / self.config.ratio_bins

    @property
    def s_nodes(self) -> np.ndarray:
        return np.geomspace(self.s_min, self.s_max, self.config.s_bins)

    def matches(self, medium: Medium) -> bool:
        return self.fingerprint == medium.fingerprint()

    def arrays(self) -> EdaArrays:
        return EdaArrays(self.pmf, self.cdf, (~self.empty).astype(np.float64), float(self.s_min), float(self.s_max))

    # -- cache file ---------------------------------------------------------
    def to_bytes(self) -> bytes:
        c = self.config
        head = MAGIC + struct.pack("<I4d3I2dIQ", VERSION, *self.fingerprint, c.ratio_bins, c.s_bins,
                                   c.angular_bins, c.s_min_mfp, c.s_max_mfp, c.mc_samples_per_bin, c.seed)
        return head + self.masses.astype("<f8").tobytes(order="C")

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, medium: Optional[Medium] = None) -> "EdaTable":
        buf = io.BytesIO(data)
        if buf.read(4) != MAGIC:
            raise ValueError("not an EDA table file")
        fmt = "<I4d3I2dIQ"
        fields = struct.unpack(fmt, buf.read(struct.calcsize(fmt)))
        version, fp = fields[0], fields[1:5]
        if version != VERSION:
            raise ValueError(f"unsupported table version {version}")
        if medium is not None and tuple(fp) != medium.fingerprint():
            raise FingerprintMismatch(f"table built for {fp}, scene medium is {medium.fingerprint()}")
        n_r, n_s, n_a, smin, smax, ns, seed = fields[5:]
        cfg = EdaTableConfig(n_r, n_s, n_a, smin, smax, ns, seed)
        masses = np.frombuffer(buf.read(8 * n_r * n_s * n_a), dtype="<f8").reshape(n_r, n_s, n_a)
        return cls(fp, cfg, masses.astype(np.float64))

    @classmethod
    def load(cls, path, medium: Optional[Medium] = None) -> "EdaTable":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), medium)


def empty_arrays() -> EdaArrays:
    """Placeholder for kernels when no table is in use; every lookup fails."""
    z = np.zeros((1, 1, 256))
    return EdaArrays(z, np.zeros((1, 1, 257)), np.zeros((1, 1)), 1.0, 0.0)


# -- tabulation ----------------------------------------------------------------

@jit(fastmath=True)
def cell_masses_nb(C, S, n_a, n_c, n_t, sigma_t, sigma_a, D, st, out):
    """Stratified MC estimate of the chord integral per cos-theta bin, up to a
    constant factor (see ``chord_constant``).

    Each bin uses ``n_c`` jittered cos strata; along every chord the ``n_t``
    points form a randomly shifted lattice.
    """
    width = 2.0 / n_a
    inv4d = 1.0 / (4.0 * D)
    for b in range(n_a):
        acc = 0.0
        for i in range(n_c):
            ct = -1.0 + (b + (i + next_float(st)) / n_c) * width
            tm = (S * S - C * C) / (2.0 * S - 2.0 * C * ct)
            k = 2.0 * C * ct
            shift = next_float(st)
            dt = tm / n_t
            row = 0.0
            for j in range(n_t):
                t = (j + shift) * dt
                L = S - t
                inv_l = 1.0 / L
                r2 = max(0.0, t * t - k * t + C * C)
                row += math.exp(-sigma_t * t - r2 * inv4d * inv_l - sigma_a * L) * inv_l * math.sqrt(inv_l)
            acc += row * tm
        out[b] = acc * width / (n_c * n_t)


def chord_constant(medium: Medium) -> float:
    """Factor turning ``cell_masses_nb`` output into sigma_s * int exp(-sigma_t t) flux dt."""
    return medium.sigma_s * medium.speed * (4.0 * math.pi * medium.D) ** -1.5


@jit(parallel=True)
def _build_nb(ratio_nodes, s_nodes, n_a, n_c, n_t, sigma_t, sigma_a, D, seed, out):
    n_r = ratio_nodes.shape[0]
    n_s = s_nodes.shape[0]
    for cell in prange(n_r * n_s):
        i = cell // n_s
        j = cell % n_s
        S = s_nodes[j]
        st = new_state(seed, 0x7AB1E, cell)
        cell_masses_nb(ratio_nodes[i] * S, S, n_a, n_c, n_t, sigma_t, sigma_a, D, st, out[i, j])


def build_table(medium: Medium, config: EdaTableConfig = EdaTableConfig(), threads: Optional[int] = None) -> EdaTable:
    if not medium.sigma_t > 0 or not math.isfinite(medium.D):
        raise ValueError("EDA tabulation needs a scattering medium")
    prev = numba.get_num_threads()
    if threads is not None:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    try:
        s_min = config.s_min_mfp / medium.sigma_t
        s_max = config.s_max_mfp / medium.sigma_t
        ratio_nodes = np.arange(config.ratio_bins) / config.ratio_bins
        s_nodes = np.geomspace(s_min, s_max, config.s_bins)
        out = np.zeros((config.ratio_bins, config.s_bins, config.angular_bins))
        n_c, n_t = config.strata()
        _build_nb(ratio_nodes, s_nodes, config.angular_bins, n_c, n_t, medium.sigma_t, medium.sigma_a,
                  medium.D, np.uint64(config.seed), out)
    finally:
        numba.set_num_threads(prev)
    out *= chord_constant(medium)
    return EdaTable(medium.fingerprint(), config, out)


# -- queries -------------------------------------------------------------------

@jit
def eda_corners_nb(ea, C, S):
    """Bilinear corners for (C/S, S): returns (ok, i0, i1, j0, j1, w00, w01, w10, w11)."""
    n_r = ea.pmf.shape[0]
    n_s = ea.pmf.shape[1]
    if not (S > C and S >= ea.s_min and S <= ea.s_max and C >= 0.0):
        return False, 0, 0, 0, 0, 0.0, 0.0, 0.0, 0.0
    fr = C / S * n_r
    i0 = int(fr)
    if i0 >= n_r - 1:
        i0 = n_r - 1
        i1 = i0
        wr = 0.0
    else:
        i1 = i0 + 1
        wr = fr - i0
    fs = math.log(S / ea.s_min) / math.log(ea.s_max / ea.s_min) * (n_s - 1)
    j0 = min(int(fs), n_s - 2)
    j1 = j0 + 1
    ws = fs - j0
    w00 = (1.0 - wr) * (1.0 - ws) * ea.weight_ok[i0, j0]
    w01 = (1.0 - wr) * ws * ea.weight_ok[i0, j1]
    w10 = wr * (1.0 - ws) * ea.weight_ok[i1, j0]
    w11 = wr * ws * ea.weight_ok[i1, j1]
    tot = w00 + w01 + w10 + w11
    if not tot > 0.0:
        return False, 0, 0, 0, 0, 0.0, 0.0, 0.0, 0.0
    return True, i0, i1, j0, j1, w00 / tot, w01 / tot, w10 / tot, w11 / tot


@jit
def _bin_of(n_a, cos_theta):
    b = int((cos_theta + 1.0) * 0.5 * n_a)
    return min(max(b, 0), n_a - 1)


@jit
def eda_pdf_nb(ea, C, S, cos_theta):
    """Solid-angle pdf of direction with ``cos_theta`` to the major axis; (pdf, ok)."""
    ok, i0, i1, j0, j1, w00, w01, w10, w11 = eda_corners_nb(ea, C, S)
    if not ok:
        return 0.0, False
    n_a = ea.pmf.shape[2]
    b = _bin_of(n_a, cos_theta)
    p = (w00 * ea.pmf[i0, j0, b] + w01 * ea.pmf[i0, j1, b]
         + w10 * ea.pmf[i1, j0, b] + w11 * ea.pmf[i1, j1, b])
    return p * n_a * 0.5 * INV_2PI, True


@jit
def _invert_cell(cdf_row, pmf_row, u):
    n_a = pmf_row.shape[0]
    lo = 0
    hi = n_a
    # largest b with cdf[b] <= u
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cdf_row[mid] <= u:
            lo = mid
        else:
            hi = mid
    b = lo
    while pmf_row[b] <= 0.0 and b > 0:
        b -= 1
    frac = (u - cdf_row[b]) / pmf_row[b] if pmf_row[b] > 0.0 else 0.5
    frac = min(max(frac, 0.0), 1.0 - 1e-12)
    return -1.0 + (b + frac) * (2.0 / n_a)


@jit
def eda_sample_nb(ea, C, S, u1, u2):
    """Returns (cos_theta, phi, pdf_solid_angle, ok)."""
    ok, i0, i1, j0, j1, w00, w01, w10, w11 = eda_corners_nb(ea, C, S)
    if not ok:
        return 0.0, 0.0, 0.0, False
    # pick a corner with u1, then reuse the remainder for the inverse transform
    if u1 < w00:
        i, j, u = i0, j0, u1 / w00
    elif u1 < w00 + w01:
        i, j, u = i0, j1, (u1 - w00) / w01
    elif u1 < w00 + w01 + w10:
        i, j, u = i1, j0, (u1 - w00 - w01) / w10
    else:
        i, j, u = i1, j1, (u1 - w00 - w01 - w10) / max(w11, 1e-300)
    u = min(max(u, 0.0), 1.0 - 1e-16)
    ct = _invert_cell(ea.cdf[i, j], ea.pmf[i, j], u)
    phi = (2.0 * u2 - 1.0) * math.pi
    pdf, _ = eda_pdf_nb(ea, C, S, ct)
    return ct, phi, pdf, True


@jit
def mis_direction_nb(ea, x, w_in, xe, S, g, alpha, u_sel, u1, u2):
    """One-sample MIS of EDA and phase sampling.

    Returns (direction, phase value, mixture pdf, used_eda).
    """
    axis = vsub(xe, x)
    C = vlen(axis)
    gamma = 0.0
    if C > 0.0 and S > C:
        ok, _, _, _, _, _, _, _, _ = eda_corners_nb(ea, C, S)
        if ok:
            ratio = C / S
            gamma = ratio / (ratio + alpha)
    if gamma > 0.0:
        axis = (axis[0] / C, axis[1] / C, axis[2] / C)
    used = u_sel < gamma
    if used:
        ct, phi, p_eda, _ = eda_sample_nb(ea, C, S, u1, u2)
        wo = from_local(ct, phi, axis)
        f = hg_eval_nb(min(1.0, max(-1.0, vdot(w_in, wo))), g)
    else:
        wo, f = hg_sample_nb(w_in, g, u1, u2)
        p_eda = 0.0
        if gamma > 0.0:
            p_eda, _ = eda_pdf_nb(ea, C, S, min(1.0, max(-1.0, vdot(wo, axis))))
    return wo, f, gamma * p_eda + (1.0 - gamma) * f, used


def _check_range(table: EdaTable, C: float, S: float):
    if not (S > C >= 0) or not (table.s_min <= S <= table.s_max):
        raise TableRangeError(f"(C={C}, S={S}) outside table range S in [{table.s_min}, {table.s_max}]")


def eda_sample(table: EdaTable, C: float, S: float, u1: float, u2: float) -> tuple[float, float, float]:
    """Inverse-transform sample of ``(cos_theta, phi, pdf_solid_angle)``."""
    _check_range(table, C, S)
    ct, phi, pdf, ok = eda_sample_nb(table.arrays(), float(C), float(S), float(u1), float(u2))
    if not ok:
        raise TableRangeError("all neighbouring cells are empty")
    return ct, phi, pdf


def eda_pdf(table: EdaTable, C: float, S: float, cos_theta: float) -> float:
    _check_range(table, C, S)
    pdf, _ = eda_pdf_nb(table.arrays(), float(C), float(S), float(cos_theta))
    return pdf


def gamma_weight(ratio: float, alpha: float) -> float:
    """Probability of choosing EDA over phase sampling."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return 0.0 if ratio <= 0 else ratio / (ratio + alpha)


def mis_sample_direction(x_k, to_emitter: EllipseParams, medium: Medium, table: Optional[EdaTable],
                         alpha: float, rng: np.random.Generator, incoming=(0.0, 0.0, 1.0)):
    """Draw a direction from the EDA/phase mixture.

    Returns ``(direction, mixture_pdf, technique)`` with technique in
    ``{"eda", "phase"}``. ``incoming`` is the propagation direction arriving
    at ``x_k``, used by the phase function.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    ea = table.arrays() if table is not None else empty_arrays()
    u = rng.random(3)
    wo, _, pdf, used = mis_direction_nb(ea, tuple(np.asarray(x_k, float)), tuple(np.asarray(incoming, float)),
                                        tuple(to_emitter.focus_far), float(to_emitter.S), medium.g, float(alpha),
                                        u[0], u[1], u[2])
    return np.array(wo), pdf, ("eda" if used else "phase")


def config_dict(config: EdaTableConfig) -> dict:
    return asdict(config)
