"""Fraction of emitter connections rejected by a two-peak tabulated sensor response.

    python3 scripts/rejection.py --spp 128
"""

from __future__ import annotations

import argparse
from pathlib import Path

from darts_tof.gate import SensorGate
from darts_tof.render import STRATEGIES, StrategyConfig, render_time_gated
from darts_tof.sceneio import load_scene

SCENE = Path(__file__).resolve().parent.parent / "scenes" / "cornell.yaml"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scene", default=str(SCENE))
    ap.add_argument("--spp", type=int, default=128)
    ap.add_argument("--peaks", type=float, nargs="+", default=[1.0, 2.0])
    ap.add_argument("--half-width", type=float, default=0.1)
    args = ap.parse_args()

    times, values = [], []
    for p in args.peaks:
        times += [p - args.half_width, p, p + args.half_width]
        values += [0.0, 1.0, 0.0]
    lo, hi = times[0] - 0.2, times[-1]
    gate = SensorGate(gate_start=lo, gate_width=hi - lo, profile="tabulated", profile_times=times,
                      profile_values=values)
    scene = load_scene(args.scene).build()
    for name in STRATEGIES:
        s = render_time_gated(scene, gate, StrategyConfig.preset(name), args.spp).stats
        print(f"{name:8s} rejected {100 * s.rejection_fraction:6.2f}% of {s.connections} connections "
              f"({s.paths} paths, {s.wall_time:.1f} s)")


if __name__ == "__main__":
    main()
