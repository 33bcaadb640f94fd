import math
from dataclasses import replace

import numpy as np
import pytest

from darts_tof.elliptical import TimeWindow
from darts_tof.gate import TRANSIENT, SensorGate
from darts_tof.geometry import Ray
from darts_tof.media import Medium, hg_eval
from darts_tof.render import (STRATEGIES, PathState, StrategyConfig, direct_shadow_connection,
                              generalized_shadow_connection, mse, render_time_gated, render_transient,
                              trace_transient_path)
from darts_tof.scene import Camera, Emitter, Material, Quad, Scene

# [DERIVED] mpmath single-scattering integral, tests/oracles/compute_oracles.py
SINGLE_SCATTER = 0.010192779758565584917
SS_MEDIUM = Medium(2.0, 0.5, 0.4, 1.0, c=1.0)
SS_EMITTER = Emitter((0.3, 0.2, 0.5))
SS_WINDOW = TimeWindow(0.9, 1.4)


def _box(lo=-1.0, hi=1.0, mat="black"):
    L = hi - lo
    o = (lo, lo, lo)
    return [Quad(o, (L, 0, 0), (0, 0, L), mat), Quad((lo, hi, lo), (0, 0, L), (L, 0, 0), mat),
            Quad((lo, lo, hi), (L, 0, 0), (0, L, 0), mat), Quad(o, (0, L, 0), (0, 0, L), mat),
            Quad((hi, lo, lo), (0, 0, L), (0, L, 0), mat), Quad(o, (0, L, 0), (L, 0, 0), mat)]


def _ss_scene(camera=None):
    return Scene(SS_MEDIUM, [SS_EMITTER], camera, quads=_box(), materials={"black": Material(albedo=(0, 0, 0))})


def _vacuum_scene():
    cam = Camera((0.3, 0.5, 0.0), (0.3, 0.0, 0.0), up=(0, 0, 1), fov=1.0, resolution=(1, 1))
    return Scene(Medium(0.0, 0.0, c=1.0), [Emitter((0, 1, 0), (2.0, 2.0, 2.0))], cam,
                 quads=[Quad((-5, 0, -5), (0, 0, 10), (10, 0, 0), "f")], materials={"f": Material(albedo=(0.5,) * 3)})


VACUUM_REF = 0.5 / math.pi * 2.0 / 1.09 ** 1.5


@pytest.mark.parametrize("name", STRATEGIES)
def test_single_scatter_oracle(name):
    v = trace_transient_path(_ss_scene(), Ray((0, 0, 0), (0, 0, 1)), SS_WINDOW,
                             StrategyConfig.preset(name, max_depth=2), np.random.default_rng(3), n_paths=100_000)[:, 0]
    se = v.std(ddof=1) / math.sqrt(len(v))
    assert abs(v.mean() - SINGLE_SCATTER) < 3 * se


def test_generalized_connection_matches_single_scatter():
    # no geometry: the control vertex integral along +z alone is the single-scattering integral
    scene = Scene(SS_MEDIUM, [SS_EMITTER])
    rng = np.random.default_rng(8)
    st = PathState(np.zeros(3), np.array([0.0, 0.0, 1.0]))
    strat = StrategyConfig.preset("darts")
    v = np.array([generalized_shadow_connection(st, (0, 0, 1), scene, SS_WINDOW, SS_EMITTER, strat, rng)[0]
                  for _ in range(40_000)])
    se = v.std(ddof=1) / math.sqrt(len(v))
    assert abs(v.mean() - SINGLE_SCATTER) < 3 * se
    assert se < 0.02 * SINGLE_SCATTER


def test_direct_connection_value():
    scene = Scene(SS_MEDIUM, [Emitter((0, 0, 1))])
    st = PathState(np.zeros(3), np.array([0.0, 0.0, 1.0]), elapsed_time=0.2)
    inside = direct_shadow_connection(st, scene, TimeWindow(1.0, 1.5), scene.emitters[0])
    assert inside == pytest.approx(hg_eval(1.0, SS_MEDIUM.g) * math.exp(-SS_MEDIUM.sigma_t), rel=1e-12)
    outside = direct_shadow_connection(st, scene, TimeWindow(1.3, 1.5), scene.emitters[0])
    assert np.all(outside == 0)


@pytest.mark.parametrize("name", STRATEGIES)
def test_vacuum_inverse_square(name):
    img = render_time_gated(_vacuum_scene(), SensorGate(gate_start=0.0, gate_width=10.0), StrategyConfig.preset(name),
                            64)
    assert img.data[0, 0] == pytest.approx([VACUUM_REF] * 3, rel=0.01)


def test_warp_shifts_arrival():
    # camera leg 0.5, emitter leg sqrt(1.09)
    gate = SensorGate(gate_start=1.0, gate_width=0.1, warp=True)
    on = render_time_gated(_vacuum_scene(), gate, StrategyConfig.preset("vanilla"), 8)
    off = render_time_gated(_vacuum_scene(), replace(gate, warp=False), StrategyConfig.preset("vanilla"), 8)
    assert np.all(on.data == 0)
    assert off.data[0, 0, 0] == pytest.approx(VACUUM_REF, rel=0.01)
    late = render_time_gated(_vacuum_scene(), SensorGate(gate_start=1.5, gate_width=0.1), StrategyConfig.preset("vanilla"), 8)
    assert late.data[0, 0, 0] == pytest.approx(VACUUM_REF, rel=0.01)


def test_no_emitter_renders_black(cornell_desc):
    d = cornell_desc
    scene = Scene(d.medium, [], d.camera, spheres=d.spheres, quads=d.quads, materials=d.materials)
    for name in STRATEGIES:
        img = render_time_gated(scene, cornell_desc.gate, StrategyConfig.preset(name), 4, resolution=(6, 6))
        assert np.all(img.data == 0)


@pytest.mark.parametrize("name", STRATEGIES)
def test_gate_before_arrival_is_black(cornell, cornell_desc, name):
    cam = np.asarray(cornell_desc.camera.position)
    first = np.linalg.norm(cam - np.asarray(cornell_desc.emitters[0].position))
    gate = SensorGate(gate_start=0.2, gate_width=first - 0.2 - 1e-9)
    img = render_time_gated(cornell, gate, StrategyConfig.preset(name), 16, resolution=(8, 8))
    assert np.all(img.data == 0)
    assert img.stats.paths == 8 * 8 * 16


def _ss_camera_scene():
    return _ss_scene(Camera((0, 0, 0), (0, 0, 1), fov=10.0, resolution=(4, 4)))


def test_deterministic_and_seed_dependent():
    gate = SensorGate(gate_start=0.9, gate_width=0.5)
    s = StrategyConfig.preset("darts")
    a = render_time_gated(_ss_camera_scene(), gate, s, 64, seed=5)
    b = render_time_gated(_ss_camera_scene(), gate, s, 64, seed=5)
    c = render_time_gated(_ss_camera_scene(), gate, s, 64, seed=6)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_standard_error_scales_with_spp():
    gate = SensorGate(gate_start=0.9, gate_width=0.5)
    s = StrategyConfig.preset("vanilla", max_depth=2)
    lo = render_time_gated(_ss_camera_scene(), gate, s, 1024, seed=1)
    hi = render_time_gated(_ss_camera_scene(), gate, s, 4096, seed=2)
    ratio = hi.std_error.mean() / lo.std_error.mean()
    assert ratio == pytest.approx(0.5, rel=0.1)
    z = (hi.data - lo.data) / np.sqrt(hi.std_error ** 2 + lo.std_error ** 2)
    assert np.mean(np.abs(z) < 3) > 0.95


@pytest.mark.parametrize("spp,frames", [(10, 3), (64, 4), (7, 7), (5, 8)])
def test_transient_frame_sample_counts(spp, frames):
    gate = SensorGate(mode=TRANSIENT, gate_start=0.9, gate_width=0.1, frame_count=frames)
    img = render_transient(_ss_camera_scene(), gate, StrategyConfig.preset("vanilla"), spp)
    n = img.samples_per_frame
    assert img.frames.shape == (frames, 4, 4, 3)
    assert np.all(n.sum(axis=-1) == spp)
    assert np.all(np.abs(n - spp / frames) <= 1)


def test_transient_requires_transient_gate():
    with pytest.raises(ValueError):
        render_transient(_ss_camera_scene(), SensorGate(), StrategyConfig.preset("vanilla"), 4)


def test_rejection_counter_vanilla_vs_darts(cornell, cornell_desc):
    gate = cornell_desc.gate
    v = render_time_gated(cornell, gate, StrategyConfig.preset("vanilla"), 16, resolution=(8, 8))
    d = render_time_gated(cornell, gate, StrategyConfig.preset("darts"), 16, resolution=(8, 8))
    assert v.stats.connections > 0 and d.stats.connections > 0
    assert v.stats.rejection_fraction > d.stats.rejection_fraction


def test_histogram_counts_connections(cornell, cornell_desc):
    img = render_time_gated(cornell, cornell_desc.gate, StrategyConfig.preset("da"), 16, resolution=(8, 8), hist_bins=16)
    h = img.stats.hist
    assert h.shape == (16, 4) and len(img.stats.hist_edges) == 17
    assert h[:, 0].sum() == img.stats.connections - img.stats.rejected
    assert np.all(h[:, 1:] >= 0)


def test_strategy_config():
    assert StrategyConfig.preset("vanilla").name == "vanilla"
    assert StrategyConfig.preset("darts").any_darts
    assert not StrategyConfig.preset("vanilla").any_darts
    with pytest.raises(ValueError):
        StrategyConfig.preset("fancy")
    with pytest.raises(ValueError):
        StrategyConfig(True, True, True, alpha=-1)


def test_mse():
    assert mse(np.ones((2, 2, 3)), np.zeros((2, 2, 3))) == 1.0
    with pytest.raises(ValueError):
        mse(np.ones(3), np.ones(4))
