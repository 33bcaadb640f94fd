"""Per-strategy variance at several gate start times on the Cornell scene.

The MSE of an unbiased render equals its variance, so each run's estimate is
the mean over pixels of the squared standard error. Point emitters inside a
medium produce heavy-tailed path contributions, so medians over seeds are
reported next to the per-seed values.

    python3 scripts/variance_study.py --gates 0.8 1.0 1.4 --seeds 5 --spp 2048
"""

from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from darts_tof.render import STRATEGIES, StrategyConfig, render_time_gated
from darts_tof.sceneio import load_scene

SCENE = Path(__file__).resolve().parent.parent / "scenes" / "cornell.yaml"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scene", default=str(SCENE))
    ap.add_argument("--gates", type=float, nargs="+", default=[1.0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--spp", type=int, default=2048)
    ap.add_argument("--strategies", nargs="+", default=list(STRATEGIES))
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    desc = load_scene(args.scene)
    scene = desc.build()
    for g in args.gates:
        gate = replace(desc.gate, gate_start=g)
        var = {}
        for name in args.strategies:
            strat = StrategyConfig.preset(name)
            v = []
            for s in range(args.seeds):
                img = render_time_gated(scene, gate, strat, args.spp, seed=1000 * s + 7, threads=args.threads)
                v.append(float(np.mean(img.std_error ** 2)))
            var[name] = v
            print(f"gate={g:.3f} {name:8s} median={np.median(v):.3e} runs=" + " ".join(f"{x:.2e}" for x in v),
                  flush=True)
        if "vanilla" in var:
            for name in var:
                print(f"gate={g:.3f} median ratio {name}/vanilla = {np.median(var[name]) / np.median(var['vanilla']):.3f}",
                      flush=True)


if __name__ == "__main__":
    main()
