"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The time-gated comparisons share one set of renders: every strategy is run as
independent 2k-spp replicates at two gate start times. Averaging the replicates
at the first time point gives the 64k-spp images of criterion 1.

Path contributions from a point emitter inside a medium have infinite variance
(tail index about 1.5 for every strategy), so a single image's squared error is
dominated by its brightest outlier. MSE comparisons therefore use the median of
the per-replicate MSE; means are printed next to them.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from dataclasses import replace

import numba
import numpy as np
import pytest
from scipy.integrate import quad

from darts_tof.diffusion import da_flux_nb
from darts_tof.eda import EdaTableConfig, build_table
from darts_tof.gate import TIME_GATED, TRANSIENT, SensorGate
from darts_tof.imageio import write_pfm
from darts_tof.media import Medium
from darts_tof.render import STRATEGIES, StrategyConfig, render_time_gated, render_transient
from darts_tof.stats import (default_distance_cases, default_medium, length_control, pdf_t_normalization,
                             random_ellipse_configs, ris_unbiasedness, suite_da_distance, suite_eda)
from darts_tof.stats import EllipseCase

pytestmark = pytest.mark.acceptance

SPP = 2048
TIME_POINTS = (1.0, 1.4)  # gate starts: shorter and longer target path lengths
REPLICATES = {1.0: 32, 1.4: 32}  # 32 x 2k = 64k spp per strategy and time point
CELL_32_32_200 = 0.017030050773292598631  # [DERIVED] tests/oracles/compute_oracles.py


@pytest.fixture(scope="module")
def runs(cornell, cornell_desc, cornell_table):
    """{gate_start: {strategy: (R, H, W, 3) replicate images}}, rendered lazily."""
    cache = {}

    def get(t0):
        if t0 not in cache:
            gate = replace(cornell_desc.gate, gate_start=t0)
            out = {}
            for k, name in enumerate(STRATEGIES):
                strat = StrategyConfig.preset(name)
                imgs = [render_time_gated(cornell, gate, strat, SPP, seed=7919 * r + 101 * k + 1,
                                          table=cornell_table).data for r in range(REPLICATES[t0])]
                out[name] = np.stack(imgs)
            cache[t0] = out
        return cache[t0]

    return get


def _replicate_mse(reps: dict) -> dict:
    """Per-replicate MSE against the leave-one-out mean of every other replicate (all strategies)."""
    allimg = np.concatenate([reps[n] for n in STRATEGIES])
    total, n_all = allimg.sum(axis=0), len(allimg)
    out = {}
    for name in STRATEGIES:
        out[name] = np.array([np.mean((img - (total - img) / (n_all - 1)) ** 2) for img in reps[name]])
    return out


def test_c1_cross_strategy_unbiasedness(runs, acceptance_report):
    reps = runs(TIME_POINTS[0])
    means = {n: reps[n].mean(axis=0) for n in STRATEGIES}
    se = {n: reps[n].std(axis=0, ddof=1) / math.sqrt(len(reps[n])) for n in STRATEGIES}
    pooled = np.mean([means[n] for n in STRATEGIES], axis=0)
    q = float(np.quantile(pooled, 0.99))
    worst, parts = 0.0, []
    for a, b in itertools.combinations(STRATEGIES, 2):
        d = abs(means[a].mean() - means[b].mean()) / q
        z = (means[a] - means[b]) / np.sqrt(se[a] ** 2 + se[b] ** 2 + 1e-300)
        rms = float(np.sqrt(np.mean((means[a] - means[b]) ** 2)) / q)
        parts.append(f"{a}/{b} {100 * d:.2f}% (pixel rms {100 * rms:.1f}%, |z|>4 {np.mean(np.abs(z) > 4):.3f})")
        worst = max(worst, d)
    ok = acceptance_report("C1 cross-strategy unbiasedness", worst < 0.02,
                           f"max pairwise image difference {100 * worst:.2f}% of q99 (< 2%) at "
                           f"{REPLICATES[TIME_POINTS[0]] * SPP} spp; " + "; ".join(parts))
    assert ok


def test_c2_variance_reduction(runs, acceptance_report):
    parts, ok = [], True
    for t0 in TIME_POINTS:
        m = _replicate_mse(runs(t0))
        ratio = np.median(m["darts"]) / np.median(m["vanilla"])
        ok &= ratio <= 1 / 3
        parts.append(f"t={t0}: median MSE ratio {ratio:.3f} (mean-based {m['darts'].mean() / m['vanilla'].mean():.3f})")
    assert acceptance_report("C2 DARTS vs vanilla MSE <= 1/3", bool(ok), "; ".join(parts))


def test_c3_rejection_rate(cornell, cornell_desc, cornell_table, acceptance_report):
    gate = SensorGate(gate_start=0.7, gate_width=2.3, profile="tabulated",
                      profile_times=[0.9, 1.0, 1.1, 1.9, 2.0, 2.1], profile_values=[0, 1, 0, 0, 1, 0])
    fr = {}
    for name in ("vanilla", "darts"):
        img = render_time_gated(cornell, gate, StrategyConfig.preset(name), 128, table=cornell_table)
        assert img.stats.paths >= 100_000
        fr[name] = img.stats
    v, d = fr["vanilla"].rejection_fraction, fr["darts"].rejection_fraction
    ok = acceptance_report("C3 rejection rate", v > 0.5 and d < 0.05,
                           f"vanilla {100 * v:.2f}% (> 50%), darts {100 * d:.2f}% (< 5%) over "
                           f"{fr['vanilla'].paths} paths each")
    assert ok


def test_c4_da_distance_sampler(acceptance_report):
    med = default_medium()
    parts, ok = [], True
    for i, case in enumerate(default_distance_cases()):
        r = suite_da_distance(case, med, n=100_000, n_ris=256)
        ok &= r.passed
        zs = []
        for h in (lambda d: np.ones_like(d), lambda d: 1.0 + 2.0 * d):
            est, err, ref = ris_unbiasedness(case, med, h, n=1_000_000)
            zs.append((est - ref) / err)
        ok &= all(abs(z) < 3 for z in zs)
        parts.append(f"#{i} p={r.p_value:.3f} z=({zs[0]:+.2f},{zs[1]:+.2f})")
    assert acceptance_report("C4 DA distance sampler", bool(ok), "; ".join(parts))


def test_c5_elliptical_length_control(acceptance_report):
    case = EllipseCase((0.1, 0.2, 0.0), (0.0, 0.6, 0.8), (0.4, 0.1, 0.5), 0.3, 1.7)
    S, seg, valid = length_control(case, 4.2, 1_000_000)
    in_range = bool(valid.all() and np.all((S >= case.S_m) & (S < case.S_M)))
    rel = float(np.max(np.abs(seg - S) / S))
    norms = [pdf_t_normalization(*c) for c in random_ellipse_configs()]
    dev = max(abs(x - 1.0) for x in norms)
    ok = acceptance_report("C5 elliptical length control", in_range and rel < 1e-9 and dev < 1e-4,
                           f"1e6 samples in [S_m, S_M): {in_range}, max segment-sum error {rel:.2e} (< 1e-9), "
                           f"pdf_t normalisation max |1 - I| = {dev:.2e} over 10 configs (< 1e-4)")
    assert ok


def test_c6_eda_table(cornell_desc, cornell_table, acceptance_report):
    t = cornell_table
    full = ~t.empty
    monotone = bool(np.all(np.diff(t.cdf, axis=2) >= 0))
    terminal = bool(np.all(t.cdf[full][:, -1] == 1.0))
    audit = t.masses[32, 32, 200] / CELL_32_32_200 - 1.0
    chis = [suite_eda(t, C, S) for C, S in ((0.3, 0.6), (0.5, 1.5), (0.05, 2.0))]
    cores = min(os.cpu_count() or 1, numba.config.NUMBA_NUM_THREADS)
    t0 = time.perf_counter()
    build_table(cornell_desc.medium, EdaTableConfig())
    wall = time.perf_counter() - t0
    # 60 s on 8 cores; the cell loop is embarrassingly parallel, so compare core-seconds
    budget_ok = wall * min(cores, 8) / 8 < 60.0
    ok = monotone and terminal and abs(audit) < 0.01 and all(c.passed for c in chis) and budget_ok
    ok = acceptance_report(
        "C6 EDA table", ok,
        f"monotone {monotone}, terminal-1 {terminal}, audited cell {100 * audit:+.3f}% (< 1%), "
        f"chi-square p = {', '.join(f'{c.p_value:.3f}' for c in chis)}, build {wall:.1f} s on {cores} core(s) "
        f"= {wall * min(cores, 8) / 8:.1f} s at 8 cores (< 60 s)")
    assert ok


def _flux_integral(m: Medium, dt: float) -> float:
    sd = math.sqrt(2 * m.D * m.speed * dt)
    f = lambda r: 4 * math.pi * r * r * da_flux_nb(r * r, dt, m.speed, m.D, m.sigma_a)
    return quad(f, 0, 40 * sd, points=[sd, 3 * sd, 6 * sd], limit=400, epsabs=0, epsrel=1e-12)[0]


def test_c7_physics_sanity(cornell, cornell_desc, cornell_table, acceptance_report):
    media = [Medium(4.5, 0.15, 0.3, 1.0, c=1.0), Medium(10.0, 1.0, 0.0, 1.33, c=1.0), Medium(100.0, 0.5, 0.8, 1.4)]
    flux_err = 0.0
    for m in media:
        for k in (0.1, 1.0, 10.0):
            dt = k / (m.speed * m.sigma_t)
            ref = m.speed * math.exp(-m.sigma_a * m.speed * dt)
            flux_err = max(flux_err, abs(_flux_integral(m, dt) / ref - 1.0))

    # earliest possible arrival: straight from the camera to the emitter
    arrival = float(np.linalg.norm(np.subtract(cornell_desc.camera.position, cornell_desc.emitters[0].position)))
    early = SensorGate(mode=TRANSIENT, gate_start=0.0, gate_width=0.1, frame_count=10)
    n_dark = int(arrival // 0.1)
    dark = True
    for name in STRATEGIES:
        tr = render_transient(cornell, early, StrategyConfig.preset(name), 40, resolution=(16, 16), table=cornell_table)
        dark &= bool(np.all(tr.frames[:n_dark] == 0)) and bool(tr.frames[n_dark:].sum() > 0)

    zs = []
    gate = SensorGate(mode=TRANSIENT, gate_start=1.0, gate_width=0.215 / 4, frame_count=4)
    crop = (slice(8, 24), slice(8, 24))
    for name in ("vanilla", "darts"):
        tr = render_transient(cornell, gate, StrategyConfig.preset(name), 512, table=cornell_table, seed=11)
        un = render_time_gated(cornell, replace(gate, mode=TIME_GATED, gate_width=0.215, frame_count=1),
                               StrategyConfig.preset(name), 512, table=cornell_table, seed=12)
        fs = tr.frames[(slice(None),) + crop].sum(axis=0)
        var_fs = (tr.std_error[(slice(None),) + crop] ** 2).sum()
        d = fs.sum() - un.data[crop].sum()
        zs.append(d / math.sqrt(var_fs + (un.std_error[crop] ** 2).sum()))
    ok = flux_err < 1e-4 and dark and all(abs(z) < 3 for z in zs)
    ok = acceptance_report(
        "C7 physics sanity", ok,
        f"flux integral max rel error {flux_err:.1e} (< 1e-4, 3 media x 3 times); "
        f"{n_dark} frames before arrival at {arrival:.3f} exactly zero: {dark}; "
        f"frame-sum vs union gate on 16x16 crop z = {', '.join(f'{z:+.2f}' for z in zs)} (|z| < 3)")
    assert ok


def test_c8_determinism(cornell, cornell_desc, cornell_table, tmp_path, acceptance_report):
    blobs = {}
    for n in (1, 4, 8):
        img = render_time_gated(cornell, cornell_desc.gate, StrategyConfig.preset("darts"), 32, resolution=(16, 16),
                                seed=99, threads=n, table=cornell_table)
        write_pfm(tmp_path / f"t{n}.pfm", img.data)
        blobs[n] = (tmp_path / f"t{n}.pfm").read_bytes()
    same = blobs[1] == blobs[4] == blobs[8]
    ok = acceptance_report("C8 determinism", same and numba.config.NUMBA_NUM_THREADS >= 8,
                           f"pfm bytes identical for 1, 4, 8 threads: {same}")
    assert ok


def test_c9_ablation_ordering(runs, acceptance_report):
    parts, ok = [], True
    for t0 in TIME_POINTS:
        m = {n: float(np.median(v)) for n, v in _replicate_mse(runs(t0)).items()}
        good = m["darts"] <= m["da"] <= m["vanilla"] and m["darts"] <= m["eda"] <= m["vanilla"]
        ok &= good
        parts.append(f"t={t0}: " + ", ".join(f"{n} {m[n]:.2e}" for n in ("darts", "da", "eda", "vanilla"))
                     + ("" if good else " (order violated)"))
    assert acceptance_report("C9 ablation ordering (median MSE)", bool(ok), "; ".join(parts))
