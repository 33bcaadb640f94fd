"""MSE against a high-spp reference as spp grows, for each strategy.

The reference is the average of all strategies at the largest spp, built from
seeds disjoint from the test renders.

    python3 scripts/convergence.py --spp 64 256 1024 --ref-spp 8192
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from darts_tof.render import STRATEGIES, StrategyConfig, mse, render_time_gated
from darts_tof.sceneio import load_scene

SCENE = Path(__file__).resolve().parent.parent / "scenes" / "cornell.yaml"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scene", default=str(SCENE))
    ap.add_argument("--spp", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--ref-spp", type=int, default=8192)
    ap.add_argument("--gate-start", type=float, default=None)
    args = ap.parse_args()

    desc = load_scene(args.scene)
    scene = desc.build()
    gate = desc.gate if args.gate_start is None else replace(desc.gate, gate_start=args.gate_start)
    ref = np.mean([render_time_gated(scene, gate, StrategyConfig.preset(n), args.ref_spp, seed=10_000 + k).data
                   for k, n in enumerate(STRATEGIES)], axis=0)
    print("spp      " + " ".join(f"{n:>10s}" for n in STRATEGIES))
    for spp in args.spp:
        row = [mse(render_time_gated(scene, gate, StrategyConfig.preset(n), spp, seed=1).data, ref) for n in STRATEGIES]
        print(f"{spp:<8d} " + " ".join(f"{e:10.3e}" for e in row), flush=True)


if __name__ == "__main__":
    main()
