"""High-level rendering entry points around the compiled integrator."""

from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from .distance import N_RIS, QRNG_TABLE
from .eda import EdaTable, EdaTableConfig, build_table, empty_arrays
from .elliptical import TimeWindow
from .gate import TIME_GATED, TRANSIENT, GateArrays, SensorGate
from .integrator import (D_CONN, D_DISCARD, D_PATHS, D_REJECT, N_DIAG, KMedium, KStrategy,
                         direct_connection_nb, elliptical_connection_nb, render_nb, trace_single_nb)
from .media import Medium
from .scene import Emitter, Scene

STRATEGIES = ("vanilla", "da", "eda", "darts")
_STACK = 64


@dataclass(frozen=True)
class StrategyConfig:
    """Which DARTS components are active, plus the walk controls.

    ``surface_weight`` is the chord length (in mean free paths) given to the
    surface branch of an elliptical connection whose ellipse is cut by a
    surface.
    """

    use_da_distance: bool = False
    use_eda_direction: bool = False
    use_elliptical_connection: bool = False
    alpha: float = 0.5
    n_ris: int = N_RIS
    max_depth: int = 200
    rr_start_depth: int = 16
    surface_weight: float = 1.0

    def __post_init__(self):
        if self.n_ris < 1 or self.n_ris & (self.n_ris - 1):
            raise ValueError(f"n_ris must be a power of two, got {self.n_ris}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.rr_start_depth < 1:
            raise ValueError("rr_start_depth must be >= 1")
        if not self.surface_weight > 0:
            raise ValueError("surface_weight must be positive")

    @classmethod
    def preset(cls, name: str, **kw) -> "StrategyConfig":
        """``vanilla``, ``da`` (DA distance only), ``eda`` (EDA + elliptical) or ``darts``."""
        flags = {
            "vanilla": (False, False, False),
            "da": (True, False, False),
            "eda": (False, True, True),
            "darts": (True, True, True),
        }
        if name not in flags:
            raise ValueError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")
        da, eda, ell = flags[name]
        return cls(use_da_distance=da, use_eda_direction=eda, use_elliptical_connection=ell, **kw)

    @property
    def any_darts(self) -> bool:
        return self.use_da_distance or self.use_eda_direction or self.use_elliptical_connection

    @property
    def name(self) -> str:
        key = (self.use_da_distance, self.use_eda_direction, self.use_elliptical_connection)
        return {(False, False, False): "vanilla", (True, False, False): "da",
                (False, True, True): "eda", (True, True, True): "darts"}.get(key, "custom")


@dataclass
class RenderStats:
    paths: int = 0
    connections: int = 0
    rejected: int = 0
    discarded: int = 0
    wall_time: float = 0.0
    hist_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hist: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    @property
    def rejection_fraction(self) -> float:
        return self.rejected / self.connections if self.connections else 0.0


@dataclass
class Image:
    """Linear RGB, shape (height, width, 3), plus per-pixel standard error."""

    data: np.ndarray
    std_error: np.ndarray
    stats: RenderStats
    spp: int = 0

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class TransientImage:
    """Frames of shape (frame_count, height, width, 3)."""

    frames: np.ndarray
    std_error: np.ndarray
    stats: RenderStats
    frame_times: np.ndarray
    samples_per_frame: np.ndarray  # (height, width, frame_count)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    def frame_sum(self) -> np.ndarray:
        return self.frames.sum(axis=0)


# -- table cache ----------------------------------------------------------------

def cache_dir() -> Path:
    return Path(os.environ.get("DARTS_TOF_CACHE", Path.home() / ".cache" / "darts_tof"))


def table_cache_path(medium: Medium, config: EdaTableConfig, directory: Optional[Path] = None) -> Path:
    key = repr((medium.fingerprint(), config)).encode()
    return Path(directory or cache_dir()) / f"eda_{hashlib.sha1(key).hexdigest()[:16]}.bin"


_TABLES: dict = {}


def get_table(medium: Medium, config: EdaTableConfig = EdaTableConfig(), threads: Optional[int] = None,
              use_disk: bool = True) -> EdaTable:
    """Table for ``medium``: memory cache, then disk cache, then a fresh build."""
    key = (medium.fingerprint(), config)
    if key in _TABLES:
        return _TABLES[key]
    path = table_cache_path(medium, config)
    table = None
    if use_disk and path.exists():
        try:
            table = EdaTable.load(path, medium)
            if table.config != config:
                table = None
        except ValueError:
            table = None
    if table is None:
        table = build_table(medium, config, threads)
        if use_disk:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.tmp")
            table.save(tmp)
            os.replace(tmp, path)
    _TABLES[key] = table
    return table


# -- kernel inputs ----------------------------------------------------------------

def kernel_medium(m: Medium) -> KMedium:
    return KMedium(float(m.sigma_s), float(m.sigma_a), float(m.sigma_t), float(m.g), float(m.speed), float(m.D))


def kernel_strategy(s: StrategyConfig, m: Medium) -> KStrategy:
    t_surf = s.surface_weight * (m.mfp if math.isfinite(m.mfp) else 1.0)
    if not m.sigma_s > 0:
        t_surf = math.inf  # medium events carry nothing, so always take the surface branch
    return KStrategy(bool(s.use_da_distance), bool(s.use_eda_direction), bool(s.use_elliptical_connection),
                     float(s.alpha), int(s.n_ris), int(s.max_depth), int(s.rr_start_depth), float(t_surf))


def _eda_arrays(scene: Scene, strategy: StrategyConfig, table: Optional[EdaTable], threads):
    if not strategy.use_eda_direction or not scene.medium.sigma_s > 0:
        return empty_arrays()
    if table is None:
        table = get_table(scene.medium, threads=threads)
    elif not table.matches(scene.medium):
        raise ValueError("EDA table was built for a different medium")
    return table.arrays()


def window_arrays(window: TimeWindow) -> GateArrays:
    """Gate arrays for one fixed rectangular window."""
    lo, hi = float(window.t_min), float(window.t_max)
    return GateArrays(np.array([lo, hi]), np.array([1.0, 1.0]), np.array([lo]), np.array([hi]), np.array([1.0]),
                      np.array([1.0]), np.array([0, 1], dtype=np.int64))


def _set_threads(threads: Optional[int]) -> None:
    n = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(n if threads is None else max(1, min(int(threads), n)))


def _render(scene: Scene, gate: SensorGate, strategy: StrategyConfig, spp: int, resolution, seed: int,
            threads: Optional[int], table: Optional[EdaTable], hist_bins: int, tile: int = 1024):
    if scene.camera is None:
        raise ValueError("scene has no camera")
    if spp < 1:
        raise ValueError("spp must be >= 1")
    width, height = resolution if resolution is not None else scene.camera.resolution
    cam = replace(scene.camera, resolution=(width, height)).params()
    _set_threads(threads)
    med = kernel_medium(scene.medium)
    strat = kernel_strategy(strategy, scene.medium)
    ea = _eda_arrays(scene, strategy, table, threads)
    ga = gate.arrays(split_windows=strategy.any_darts)
    e_pos, e_int, e_t0 = scene.emitter_arrays()
    F = gate.frames
    n_pix = width * height
    h_lo, h_hi = float(gate.gate_start), float(gate.t_end)

    out_sum = np.zeros((n_pix, F, 3))
    out_sq = np.zeros((n_pix, F, 3))
    out_n = np.zeros((n_pix, F))
    diag_total = np.zeros(N_DIAG)
    hist_total = np.zeros((hist_bins, 4))
    t0 = time.perf_counter()
    for start in range(0, n_pix, tile):
        ids = np.arange(start, min(n_pix, start + tile), dtype=np.int64)
        s_sum = np.zeros((len(ids), F, 3))
        s_sq = np.zeros((len(ids), F, 3))
        s_n = np.zeros((len(ids), F))
        diag = np.zeros((len(ids), N_DIAG))
        hist = np.zeros((len(ids), hist_bins, 4))
        render_nb(scene.arrays, ea, QRNG_TABLE, med, strat, ga, e_pos, e_int, e_t0, cam, width, height, spp,
                  _u64(seed), bool(gate.warp), ids, s_sum, s_sq, s_n, diag, hist, h_lo, h_hi)
        out_sum[ids], out_sq[ids], out_n[ids] = s_sum, s_sq, s_n
        diag_total += diag.sum(axis=0)
        hist_total += hist.sum(axis=0)
    wall = time.perf_counter() - t0

    # each path belongs to exactly one frame, so every frame is its own estimator
    n = np.maximum(out_n, 1.0)[..., None]
    mean = out_sum / n
    var = np.maximum(out_sq / n - mean * mean, 0.0) / np.maximum(n - 1.0, 1.0)
    stats = RenderStats(paths=int(diag_total[D_PATHS]), connections=int(diag_total[D_CONN]),
                        rejected=int(diag_total[D_REJECT]), discarded=int(diag_total[D_DISCARD]), wall_time=wall,
                        hist_edges=np.linspace(h_lo, h_hi, hist_bins + 1), hist=hist_total)
    shape = (height, width)
    return mean.reshape(*shape, F, 3), np.sqrt(var).reshape(*shape, F, 3), out_n.reshape(*shape, F), stats


def render_time_gated(scene: Scene, gate: SensorGate, strategy: StrategyConfig, spp: int, resolution=None,
                      seed: int = 0, threads: Optional[int] = None, table: Optional[EdaTable] = None,
                      hist_bins: int = 64) -> Image:
    if gate.mode != TIME_GATED:
        gate = replace(gate, mode=TIME_GATED)
    mean, err, _, stats = _render(scene, gate, strategy, spp, resolution, seed, threads, table, hist_bins)
    return Image(mean[:, :, 0], err[:, :, 0], stats, spp)


def render_transient(scene: Scene, gate: SensorGate, strategy: StrategyConfig, spp: int, resolution=None,
                     seed: int = 0, threads: Optional[int] = None, table: Optional[EdaTable] = None,
                     hist_bins: int = 64) -> TransientImage:
    if gate.mode != TRANSIENT:
        raise ValueError("render_transient needs a gate in transient mode")
    mean, err, counts, stats = _render(scene, gate, strategy, spp, resolution, seed, threads, table, hist_bins)
    times = np.array([gate.frame_bounds(f) for f in range(gate.frames)])
    return TransientImage(np.moveaxis(mean, 2, 0).copy(), np.moveaxis(err, 2, 0).copy(), stats, times, counts)


# -- single-path surfaces ------------------------------------------------------------

@dataclass
class PathState:
    vertex: np.ndarray
    direction: np.ndarray
    elapsed_time: float = 0.0
    throughput: tuple = (1.0, 1.0, 1.0)
    depth: int = 0
    on_surface: bool = False
    surface_normal: Optional[np.ndarray] = None
    material: int = -1

    def __post_init__(self):
        if not all(math.isfinite(b) and b >= 0 for b in self.throughput):
            raise ValueError("throughput must be finite and non-negative")


def _u64(seed: int) -> np.uint64:
    """Seeds are taken modulo 2**64 so every Python int maps to one kernel stream."""
    return np.uint64(int(seed) % 2**64)


def _seed_from(rng: np.random.Generator) -> np.uint64:
    return _u64(rng.integers(0, 2**63 - 1))


def _diag_buffers():
    return np.zeros(N_DIAG), np.zeros((0, 4))


def trace_transient_path(scene: Scene, camera_ray, gate_window: TimeWindow, strategy: StrategyConfig,
                         rng: np.random.Generator, warp: bool = True, table: Optional[EdaTable] = None,
                         n_paths: int = 1) -> np.ndarray:
    """Run ``n_paths`` walks along ``camera_ray``; returns an (n_paths, 3) array
    (a single rgb row when ``n_paths == 1``)."""
    ea = _eda_arrays(scene, strategy, table, None)
    e_pos, e_int, e_t0 = scene.emitter_arrays()
    out = np.zeros((n_paths, 3))
    diag, hist = _diag_buffers()
    trace_single_nb(scene.arrays, ea, QRNG_TABLE, kernel_medium(scene.medium), kernel_strategy(strategy, scene.medium),
                    window_arrays(gate_window), e_pos, e_int, e_t0, tuple(map(float, camera_ray.origin)),
                    tuple(map(float, camera_ray.direction)), 0, bool(warp), _seed_from(rng), 0, 0, n_paths, out,
                    diag, hist, 0.0, 0.0)
    return out[0] if n_paths == 1 else out


def _emitter_parts(emitter: Emitter):
    return tuple(map(float, emitter.position)), float(emitter.emission_start), np.asarray(emitter.intensity, float)


def generalized_shadow_connection(state: PathState, omega, scene: Scene, gate_window: TimeWindow, emitter: Emitter,
                                  strategy: StrategyConfig, rng: np.random.Generator) -> np.ndarray:
    """Connection through a control vertex along ``omega`` (which must already be sampled)."""
    xe, tau, inten = _emitter_parts(emitter)
    o = tuple(map(float, state.vertex))
    w = tuple(map(float, np.asarray(omega, float) / np.linalg.norm(omega)))
    stack = np.empty(_STACK, dtype=np.int64)
    from .scene import intersect_nb
    t_s, h_n, h_mat = intersect_nb(scene.arrays, o, w, math.inf, stack)
    diag, hist = _diag_buffers()
    u = rng.random(2)
    ga = window_arrays(gate_window)
    b = np.asarray(state.throughput, float) * inten
    r, g, bl = elliptical_connection_nb(scene.arrays, stack, kernel_medium(scene.medium),
                                        kernel_strategy(strategy, scene.medium), ga, o, w, t_s, h_n, h_mat, xe,
                                        float(state.elapsed_time), tau, ga.win_lo[0], ga.win_hi[0], 1.0,
                                        u[0], u[1], b[0], b[1], b[2], diag, hist, 0.0, 0.0)
    return np.array([r, g, bl])


def direct_shadow_connection(state: PathState, scene: Scene, gate, emitter: Emitter) -> np.ndarray:
    """Next-event estimation from ``state.vertex`` straight to ``emitter``.

    ``gate`` is a :class:`SensorGate` or a :class:`TimeWindow`.
    """
    xe, tau, inten = _emitter_parts(emitter)
    if isinstance(gate, TimeWindow):
        ga = window_arrays(gate)
        lo, hi = ga.win_lo[0], ga.win_hi[0]
    else:
        ga = gate.arrays(split_windows=False)
        lo, hi = gate.gate_start, gate.t_end
    stack = np.empty(_STACK, dtype=np.int64)
    diag, hist = _diag_buffers()
    nrm = tuple(map(float, state.surface_normal)) if state.surface_normal is not None else (0.0, 0.0, 1.0)
    b = np.asarray(state.throughput, float) * inten
    r, g, bl = direct_connection_nb(scene.arrays, stack, kernel_medium(scene.medium), ga,
                                    tuple(map(float, state.vertex)), xe, bool(state.on_surface), int(state.material),
                                    nrm, tuple(map(float, state.direction)), float(state.elapsed_time), tau, lo, hi,
                                    1.0, b[0], b[1], b[2], diag, hist, 0.0, 0.0)
    return np.array([r, g, bl])


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over pixels and channels of the squared difference."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))
