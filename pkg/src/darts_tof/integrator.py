"""Compiled transient path tracer.

One path estimates the gated pixel value for a single target window. Two
connection schemes share the random walk:

* direct: every sampled vertex is linked straight to the emitter;
* elliptical: from every vertex, a control vertex is placed on the
  equal-time ellipse along the already-sampled direction, so the full path
  length lands inside the window by construction. The next walk vertex along
  the same direction is then only used to continue the walk.

Both schemes enumerate each light path exactly once, which is what keeps the
strategies unbiased with respect to each other.
"""

from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import prange

from ._jit import jit
from .distance import ris_distance_nb, trunc_exp_nb
from .eda import mis_direction_nb
from .elliptical import MEDIUM_EVENT, control_vertex_nb, feasible_nb
from .gate import profile_nb
from .geometry import vdot, vlen, vmadd, vnormalize, vsub
from .media import hg_eval_nb, hg_sample_nb
from .rng import next_float, stream_seed
from .scene import bsdf_eval_nb, bsdf_is_delta, bsdf_sample_nb, intersect_nb, occluded_nb

KMedium = namedtuple("KMedium", ["sigma_s", "sigma_a", "sigma_t", "g", "speed", "D"])
KStrategy = namedtuple("KStrategy", ["da", "eda", "ell", "alpha", "n_ris", "max_depth", "rr_start", "t_surf"])

# diagnostic slots per pixel
D_CONN, D_REJECT, D_DISCARD, D_PATHS, D_VERTS = 0, 1, 2, 3, 4
N_DIAG = 5


@jit
def _window_weight(ga, lo, hi, scale, t):
    if not (t >= lo and t < hi):
        return 0.0
    return profile_nb(ga.prof_t, ga.prof_w, t) * scale


@jit
def _record(hist, h_lo, h_hi, t, r, g, b):
    nb = hist.shape[0]
    if nb == 0 or not (t >= h_lo and t < h_hi):
        return
    k = min(int((t - h_lo) / (h_hi - h_lo) * nb), nb - 1)
    hist[k, 0] += 1.0
    hist[k, 1] += r
    hist[k, 2] += g
    hist[k, 3] += b


@jit
def _emitter_term(sa, stack, x, xe, surf, mat, nrm, w_in, g, sigma_t):
    """Unshadowed-by-W emitter transfer from ``x``: local scattering * transmittance / dist^2.

    Returns (rgb factor, distance); zero when occluded or not connectable.
    """
    d = vsub(xe, x)
    L = vlen(d)
    if not L > 0.0:
        return 0.0, 0.0, 0.0, L
    de = (d[0] / L, d[1] / L, d[2] / L)
    if surf:
        fr, fg, fb = bsdf_eval_nb(sa, mat, nrm, (-w_in[0], -w_in[1], -w_in[2]), de)
    else:
        p = hg_eval_nb(min(1.0, max(-1.0, vdot(w_in, de))), g)
        fr, fg, fb = p, p, p
    if fr == 0.0 and fg == 0.0 and fb == 0.0:
        return 0.0, 0.0, 0.0, L
    if occluded_nb(sa, x, de, L, stack):
        return 0.0, 0.0, 0.0, L
    s = math.exp(-sigma_t * L) / (L * L)
    return fr * s, fg * s, fb * s, L


@jit
def direct_connection_nb(sa, stack, med, ga, x, xe, surf, mat, nrm, w_in, elapsed, tau, lo, hi, scale,
                         mr, mg, mb, diag, hist, h_lo, h_hi):
    """Classic next-event estimation from ``x``, scaled by ``(mr, mg, mb)``."""
    d = vlen(vsub(xe, x))
    time = tau + elapsed + d / med.speed
    diag[D_CONN] += 1.0
    wt = _window_weight(ga, lo, hi, scale, time)
    if wt == 0.0:
        diag[D_REJECT] += 1.0
        _record(hist, h_lo, h_hi, time, 0.0, 0.0, 0.0)
        return 0.0, 0.0, 0.0
    fr, fg, fb, _ = _emitter_term(sa, stack, x, xe, surf, mat, nrm, w_in, med.g, med.sigma_t)
    r = fr * wt * mr
    g = fg * wt * mg
    b = fb * wt * mb
    _record(hist, h_lo, h_hi, time, r, g, b)
    return r, g, b


@jit
def elliptical_connection_nb(sa, stack, med, strat, ga, o, w, t_s, h_n, h_mat, xe, elapsed, tau, lo, hi, scale,
                             u_branch, u_s, mr, mg, mb, diag, hist, h_lo, h_hi):
    """Generalized shadow connection along ``w`` from ``o``, scaled by ``(mr, mg, mb)``."""
    S_m = med.speed * (lo - tau - elapsed)
    S_M = med.speed * (hi - tau - elapsed)
    surf_ok = h_mat >= 0 and not bsdf_is_delta(sa, h_mat)
    ok, ev, t, S, pdf = control_vertex_nb(o, w, xe, S_m, S_M, t_s, med.sigma_t, surf_ok, strat.t_surf,
                                          u_branch, u_s)
    if not ok:
        return 0.0, 0.0, 0.0
    diag[D_CONN] += 1.0
    time = tau + elapsed + S / med.speed
    wt = _window_weight(ga, lo, hi, scale, time)
    if wt == 0.0:
        diag[D_REJECT] += 1.0
        _record(hist, h_lo, h_hi, time, 0.0, 0.0, 0.0)
        return 0.0, 0.0, 0.0
    xl = vmadd(o, w, t)
    if ev == MEDIUM_EVENT:
        fr, fg, fb, L2 = _emitter_term(sa, stack, xl, xe, False, -1, w, w, med.g, med.sigma_t)
        s = med.sigma_s * math.exp(-med.sigma_t * t) * wt / pdf
    else:
        fr, fg, fb, L2 = _emitter_term(sa, stack, xl, xe, True, h_mat, h_n, w, med.g, med.sigma_t)
        s = math.exp(-med.sigma_t * t) * wt / pdf
    r = fr * s * mr
    g = fg * s * mg
    b = fb * s * mb
    _record(hist, h_lo, h_hi, time, r, g, b)
    return r, g, b


@jit
def trace_path_nb(sa, ea, qtab, med, strat, ga, e_pos, e_int, e_t0, cam_o, cam_d, frame, warp, st, stack,
                  bufd, bufl, diag, hist, h_lo, h_hi):
    """Random walk for one camera ray; returns the gated rgb estimate."""
    ne = e_pos.shape[0]
    if ne == 0:
        return 0.0, 0.0, 0.0
    diag[D_PATHS] += 1.0
    ie = min(int(next_float(st) * ne), ne - 1)
    xe = (e_pos[ie, 0], e_pos[ie, 1], e_pos[ie, 2])
    Ir = e_int[ie, 0] * ne
    Ig = e_int[ie, 1] * ne
    Ib = e_int[ie, 2] * ne
    tau = e_t0[ie]

    # target window for this path
    s0 = ga.frame_off[frame]
    s1 = ga.frame_off[frame + 1]
    k = s0
    if s1 - s0 > 1:
        u = next_float(st)
        while k < s1 - 1 and u >= ga.win_cdf[k]:
            k += 1
    lo = ga.win_lo[k]
    hi = ga.win_hi[k]
    scale = 1.0 / ga.win_prob[k]

    speed = med.speed
    albedo = med.sigma_s / med.sigma_t if med.sigma_t > 0.0 else 0.0
    o = cam_o
    w = cam_d
    elapsed = 0.0
    n_int = 0
    br = 1.0
    bg = 1.0
    bb = 1.0
    Lr = 0.0
    Lg = 0.0
    Lb = 0.0
    at_cam = True
    inf = math.inf
    if not feasible_nb(o, xe, tau, hi, speed):
        return 0.0, 0.0, 0.0
    while True:
        t_s, h_n, h_mat = intersect_nb(sa, o, w, inf, stack)
        timed = warp or not at_cam
        ell_here = strat.ell and timed
        if ell_here:
            if n_int + 2 <= strat.max_depth:
                u_b = next_float(st)
                u_s = next_float(st)
                cr, cg, cb = elliptical_connection_nb(sa, stack, med, strat, ga, o, w, t_s, h_n, h_mat, xe,
                                                      elapsed, tau, lo, hi, scale, u_b, u_s, br * Ir, bg * Ig,
                                                      bb * Ib, diag, hist, h_lo, h_hi)
                Lr += cr
                Lg += cg
                Lb += cb
            if n_int + 3 > strat.max_depth:
                break
        elif n_int + 2 > strat.max_depth:
            break

        # free-flight distance
        tf = 1.0 if timed else 0.0
        p_m = -math.expm1(-med.sigma_t * t_s) if t_s < inf else (1.0 if med.sigma_t > 0.0 else 0.0)
        if next_float(st) < p_m:
            if strat.da:
                res_len = speed * (hi - tau - elapsed)
                d, ratio, ok = ris_distance_nb(o, w, p_m, med.sigma_t, xe, res_len, tf, med.D, med.sigma_a,
                                               qtab, strat.n_ris, st, bufd, bufl)
                if not ok:
                    break
                f = albedo * ratio
            else:
                d = trunc_exp_nb(med.sigma_t, p_m, next_float(st))
                f = albedo
            br *= f
            bg *= f
            bb *= f
            x = vmadd(o, w, d)
            surf = False
        else:
            if h_mat < 0:
                break
            d = t_s
            x = vmadd(o, w, t_s)
            surf = True
        elapsed += tf * d / speed
        n_int += 1
        at_cam = False
        diag[D_VERTS] += 1.0

        if not ell_here:
            cr, cg, cb = direct_connection_nb(sa, stack, med, ga, x, xe, surf, h_mat, h_n, w, elapsed, tau,
                                              lo, hi, scale, br * Ir, bg * Ig, bb * Ib, diag, hist, h_lo, h_hi)
            Lr += cr
            Lg += cg
            Lb += cb

        if not feasible_nb(x, xe, tau + elapsed, hi, speed):
            break
        if n_int >= strat.rr_start:
            q = min(1.0, 0.2126 * br + 0.7152 * bg + 0.0722 * bb)
            if not next_float(st) < q:
                break
            br /= q
            bg /= q
            bb /= q

        # next direction
        if surf:
            wo, wt, ok = bsdf_sample_nb(sa, h_mat, h_n, (-w[0], -w[1], -w[2]), next_float(st), next_float(st))
            if not ok:
                break
            br *= wt[0]
            bg *= wt[1]
            bb *= wt[2]
        elif strat.eda:
            S = speed * (hi - tau - elapsed)
            u0 = next_float(st)
            u1 = next_float(st)
            u2 = next_float(st)
            wo, fval, pdf, _ = mis_direction_nb(ea, x, w, xe, S, med.g, strat.alpha, u0, u1, u2)
            if not pdf > 0.0:
                break
            r = fval / pdf
            br *= r
            bg *= r
            bb *= r
        else:
            wo, _ = hg_sample_nb(w, med.g, next_float(st), next_float(st))
        if br == 0.0 and bg == 0.0 and bb == 0.0:
            break
        o = x
        w = vnormalize(wo)

    if not (math.isfinite(Lr) and math.isfinite(Lg) and math.isfinite(Lb)):
        diag[D_DISCARD] += 1.0
        return 0.0, 0.0, 0.0
    return Lr, Lg, Lb


@jit
def camera_dir_nb(cam, width, height, px, py):
    sx = 2.0 * px / width - 1.0
    sy = 1.0 - 2.0 * py / height
    d = (cam[1, 0] + sx * cam[2, 0] + sy * cam[3, 0],
         cam[1, 1] + sx * cam[2, 1] + sy * cam[3, 1],
         cam[1, 2] + sx * cam[2, 2] + sy * cam[3, 2])
    return vnormalize(d)


@jit(parallel=True)
def render_nb(sa, ea, qtab, med, strat, ga, e_pos, e_int, e_t0, cam, width, height, spp, seed, warp,
              pixel_ids, out_sum, out_sq, out_n, diag, hist, h_lo, h_hi):
    """Accumulate ``spp`` paths for each pixel in ``pixel_ids`` (outputs indexed by position)."""
    frames = out_sum.shape[1]
    cam_o = (cam[0, 0], cam[0, 1], cam[0, 2])
    seed = np.uint64(seed)
    for q in prange(pixel_ids.shape[0]):
        p = pixel_ids[q]
        stack = np.empty(64, dtype=np.int64)
        bufd = np.empty(strat.n_ris)
        bufl = np.empty(max(strat.n_ris, qtab.shape[1]))
        st = np.empty(1, dtype=np.uint64)
        px = p % width
        py = p // width
        f_off = int(stream_seed(seed, p, 0xF4A3E) % np.uint64(frames))
        for s in range(spp):
            st[0] = stream_seed(seed, p, s)
            jx = next_float(st)
            jy = next_float(st)
            d = camera_dir_nb(cam, width, height, px + jx, py + jy)
            f = (s + f_off) % frames
            r, g, b = trace_path_nb(sa, ea, qtab, med, strat, ga, e_pos, e_int, e_t0, cam_o, d, f, warp, st,
                                    stack, bufd, bufl, diag[q], hist[q], h_lo, h_hi)
            out_sum[q, f, 0] += r
            out_sum[q, f, 1] += g
            out_sum[q, f, 2] += b
            out_sq[q, f, 0] += r * r
            out_sq[q, f, 1] += g * g
            out_sq[q, f, 2] += b * b
            out_n[q, f] += 1.0


@jit
def trace_single_nb(sa, ea, qtab, med, strat, ga, e_pos, e_int, e_t0, cam_o, cam_d, frame, warp, seed, a, b,
                    n_paths, out, diag, hist, h_lo, h_hi):
    """Trace ``n_paths`` independent paths along one fixed camera ray; writes each rgb to ``out``."""
    stack = np.empty(64, dtype=np.int64)
    bufd = np.empty(strat.n_ris)
    bufl = np.empty(max(strat.n_ris, qtab.shape[1]))
    st = np.empty(1, dtype=np.uint64)
    for i in range(n_paths):
        st[0] = stream_seed(np.uint64(seed), a, b + i)
        r, g, bl = trace_path_nb(sa, ea, qtab, med, strat, ga, e_pos, e_int, e_t0, cam_o, cam_d, frame, warp, st,
                                 stack, bufd, bufl, diag, hist, h_lo, h_hi)
        out[i, 0] = r
        out[i, 1] = g
        out[i, 2] = bl
