"""Sensor temporal response: gate windows, frames, and the weight profile W(t)."""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._jit import jit

TIME_GATED, TRANSIENT = "time_gated", "transient"

GateArrays = namedtuple("GateArrays", ["prof_t", "prof_w", "win_lo", "win_hi", "win_cdf", "win_prob", "frame_off"])


@dataclass(frozen=True)
class SensorGate:
    """Gate ``[gate_start, gate_start + gate_width)``; transient mode lays
    ``frame_count`` such frames back to back.

    A tabulated profile is a piecewise-linear W(t) given by knots
    ``(profile_times, profile_values)`` in absolute sensor time, zero outside
    its knot range, and multiplied by the gate/frame indicator.
    """

    mode: str = TIME_GATED
    gate_start: float = 0.0
    gate_width: float = 1.0
    frame_count: int = 1
    warp: bool = True
    profile: str = "rectangle"
    profile_times: Optional[Sequence[float]] = None
    profile_values: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.mode not in (TIME_GATED, TRANSIENT):
            raise ValueError(f"unknown gate mode {self.mode!r}")
        if not self.gate_width > 0:
            raise ValueError(f"gate width must be positive, got {self.gate_width}")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.profile not in ("rectangle", "tabulated"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.profile == "tabulated":
            t = np.asarray(self.profile_times, float)
            w = np.asarray(self.profile_values, float)
            if t.ndim != 1 or t.shape != w.shape or len(t) < 2:
                raise ValueError("tabulated profile needs matching 1-D knots (>= 2)")
            if np.any(np.diff(t) <= 0):
                raise ValueError("profile times must be strictly increasing")
            if np.any(w < 0):
                raise ValueError("tabulated profile must be non-negative")

    @property
    def frames(self) -> int:
        return self.frame_count if self.mode == TRANSIENT else 1

    @property
    def t_end(self) -> float:
        return self.gate_start + self.frames * self.gate_width

    def frame_bounds(self, f: int) -> tuple[float, float]:
        lo = self.gate_start + f * self.gate_width
        return lo, lo + self.gate_width

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        if self.profile == "tabulated":
            return np.asarray(self.profile_times, float), np.asarray(self.profile_values, float)
        return np.array([self.gate_start, self.t_end]), np.array([1.0, 1.0])

    def windows(self, f: int) -> list[tuple[float, float, float]]:
        """Sub-windows of frame ``f`` with selection probabilities ∝ their W mass."""
        lo, hi = self.frame_bounds(f)
        if self.profile == "rectangle":
            return [(lo, hi, 1.0)]
        t, w = self.knots()
        pieces = []
        for a, b, wa, wb in zip(t[:-1], t[1:], w[:-1], w[1:]):
            a2, b2 = max(a, lo), min(b, hi)
            if b2 <= a2:
                continue
            va = wa + (wb - wa) * (a2 - a) / (b - a)
            vb = wa + (wb - wa) * (b2 - a) / (b - a)
            mass = 0.5 * (va + vb) * (b2 - a2)
            if mass > 0:
                pieces.append((a2, b2, mass))
        total = sum(p[2] for p in pieces)
        return [(a, b, m / total) for a, b, m in pieces]

    def arrays(self, split_windows: bool) -> GateArrays:
        """Flattened windows per frame. Without ``split_windows`` each frame is one window."""
        lo, hi, prob, off = [], [], [], [0]
        for f in range(self.frames):
            ws = self.windows(f) if split_windows else [(*self.frame_bounds(f), 1.0)]
            if not ws:
                ws = [(*self.frame_bounds(f), 1.0)]
            for a, b, p in ws:
                lo.append(a); hi.append(b); prob.append(p)
            off.append(len(lo))
        prob = np.array(prob)
        cdf = np.zeros(len(prob))
        for f in range(self.frames):
            s, e = off[f], off[f + 1]
            cdf[s:e] = np.cumsum(prob[s:e])
            cdf[e - 1] = 1.0
        t, w = self.knots()
        return GateArrays(t, w, np.array(lo), np.array(hi), cdf, prob, np.array(off, dtype=np.int64))


@jit
def profile_nb(prof_t, prof_w, t):
    n = prof_t.shape[0]
    if not (t >= prof_t[0] and t < prof_t[n - 1]):
        return 0.0
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prof_t[mid] <= t:
            lo = mid
        else:
            hi = mid
    a = prof_t[lo]
    b = prof_t[lo + 1]
    return prof_w[lo] + (prof_w[lo + 1] - prof_w[lo]) * (t - a) / (b - a)


def sensor_weight(path_time: float, gate: SensorGate) -> float:
    """W(t): the profile value inside the gate (union of frames), zero outside."""
    if not (gate.gate_start <= path_time < gate.t_end):
        return 0.0
    if gate.profile == "rectangle":
        return 1.0
    t, w = gate.knots()
    return float(profile_nb(t, w, float(path_time)))
