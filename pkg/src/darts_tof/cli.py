"""Command-line entry point: ``darts-tof {render,tabulate,compare,pdftest}``."""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import imageio
from .eda import EdaTableConfig
from .gate import TIME_GATED, TRANSIENT
from .media import Medium
from .render import STRATEGIES, StrategyConfig, get_table, mse, render_time_gated, render_transient
from .sceneio import SceneParseError, load_scene, parse_scene


def _on_off(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _positive_int(v: str) -> int:
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return i


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="darts-tof", description="Transient / time-gated volumetric path tracer")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a scene")
    r.add_argument("--scene", help="scene YAML file")
    r.add_argument("--replay", help="re-run the render described by a manifest JSON")
    r.add_argument("--spp", type=_positive_int, default=64)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=_positive_int, default=None)
    r.add_argument("--mode", choices=["gated", "transient"], default=None)
    r.add_argument("--gate-start", type=float, default=None, help="seconds")
    r.add_argument("--gate-width", type=float, default=None, help="seconds")
    r.add_argument("--frames", type=_positive_int, default=None)
    r.add_argument("--strategy", choices=STRATEGIES, default="darts")
    r.add_argument("--alpha", type=float, default=0.5)
    r.add_argument("--warp", type=_on_off, default=None, metavar="{on,off}")
    r.add_argument("--resolution", type=_positive_int, nargs=2, default=None, metavar=("W", "H"))
    r.add_argument("--hist-bins", type=int, default=64)
    r.add_argument("--out", default="out", help="output directory")

    t = sub.add_parser("tabulate", help="build and cache an EDA table")
    t.add_argument("--scene", help="take the medium from this scene")
    t.add_argument("--sigma-s", type=float)
    t.add_argument("--sigma-a", type=float)
    t.add_argument("--g", type=float, default=0.0)
    t.add_argument("--eta", type=float, default=1.0)
    t.add_argument("--threads", type=_positive_int, default=None)
    t.add_argument("--ratio-bins", type=_positive_int, default=64)
    t.add_argument("--s-bins", type=_positive_int, default=64)
    t.add_argument("--samples", type=_positive_int, default=4096)
    t.add_argument("--out", help="also write the table to this file")

    c = sub.add_parser("compare", help="MSE between two PFM images")
    c.add_argument("test")
    c.add_argument("reference")

    q = sub.add_parser("pdftest", help="chi-square suites for the samplers")
    q.add_argument("--quick", action="store_true", help="10x fewer samples")
    q.add_argument("--no-eda", action="store_true", help="skip the EDA table suite")
    q.add_argument("--negative-control", action="store_true",
                   help="run only the rigged sampler, which must be rejected")
    return p


def _medium_of(args) -> Medium:
    if args.scene:
        return load_scene(args.scene).medium
    if args.sigma_s is None or args.sigma_a is None:
        raise ValueError("give --scene or both --sigma-s and --sigma-a")
    return Medium(args.sigma_s, args.sigma_a, args.g, args.eta)


def cmd_render(args) -> int:
    if args.replay:
        man = imageio.read_manifest(args.replay)
        text = man["scene_text"]
        base = man.get("scene_dir")
        a = man["args"]
        for k, v in a.items():
            setattr(args, k, v)
        args.replay = None
        desc = parse_scene(text, base_dir=base)
        scene_path = man.get("scene_path")
    else:
        if not args.scene:
            raise ValueError("render needs --scene (or --replay)")
        text = Path(args.scene).read_text(encoding="utf-8")
        desc = load_scene(args.scene)
        scene_path = str(Path(args.scene).resolve())
        base = str(Path(args.scene).resolve().parent)
    gate = desc.gate
    kw = {}
    if args.mode is not None:
        kw["mode"] = TRANSIENT if args.mode == "transient" else TIME_GATED
    if args.gate_start is not None:
        kw["gate_start"] = args.gate_start
    if args.gate_width is not None:
        kw["gate_width"] = args.gate_width
    if args.frames is not None:
        kw["frame_count"] = args.frames
    if args.warp is not None:
        kw["warp"] = args.warp
    gate = replace(gate, **kw)
    strategy = StrategyConfig.preset(args.strategy, alpha=args.alpha)
    scene = desc.build()
    res = tuple(args.resolution) if args.resolution else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files = []
    if gate.mode == TRANSIENT:
        img = render_transient(scene, gate, strategy, args.spp, res, args.seed, args.threads,
                               hist_bins=args.hist_bins)
        for f in range(img.frame_count):
            name = f"frame_{f:04d}"
            imageio.write_pfm(out / f"{name}.pfm", img.frames[f])
            imageio.write_png(out / f"{name}.png", img.frames[f])
            files += [f"{name}.pfm", f"{name}.png"]
        stats = img.stats
    else:
        img = render_time_gated(scene, gate, strategy, args.spp, res, args.seed, args.threads,
                                hist_bins=args.hist_bins)
        imageio.write_pfm(out / "image.pfm", img.data)
        imageio.write_png(out / "image.png", img.data)
        files += ["image.pfm", "image.png"]
        stats = img.stats
    wall = time.perf_counter() - t0
    imageio.write_histogram(stats.hist, stats.hist_edges, out / "histogram.csv")
    files.append("histogram.csv")
    saved = {k: getattr(args, k) for k in ("spp", "seed", "threads", "mode", "gate_start", "gate_width", "frames",
                                           "strategy", "alpha", "warp", "resolution", "hist_bins")}
    manifest = {
        "seed": args.seed, "spp": args.spp, "strategy": args.strategy, "wall_time_s": wall,
        "gate": asdict(gate), "strategy_config": asdict(strategy),
        "scene_path": scene_path, "scene_dir": base, "scene_text": text,
        "scene_sha1": hashlib.sha1(text.encode()).hexdigest(),
        "args": saved, "files": files,
        "stats": {"paths": stats.paths, "connections": stats.connections, "rejected": stats.rejected,
                  "rejection_fraction": stats.rejection_fraction, "discarded": stats.discarded},
    }
    imageio.write_manifest(out / "manifest.json", manifest)
    print(f"rendered {args.strategy} spp={args.spp} in {wall:.2f}s; "
          f"rejection {100 * stats.rejection_fraction:.2f}% of {stats.connections} connections -> {out}")
    return 0


def cmd_tabulate(args) -> int:
    medium = _medium_of(args)
    cfg = EdaTableConfig(ratio_bins=args.ratio_bins, s_bins=args.s_bins, mc_samples_per_bin=args.samples)
    t0 = time.perf_counter()
    table = get_table(medium, cfg, threads=args.threads)
    if args.out:
        table.save(args.out)
    print(f"EDA table {cfg.ratio_bins}x{cfg.s_bins}x{cfg.angular_bins} ready in "
          f"{time.perf_counter() - t0:.2f}s (empty cells: {int(table.empty.sum())})")
    return 0


def cmd_compare(args) -> int:
    a = imageio.read_pfm(args.test).astype(np.float64)
    b = imageio.read_pfm(args.reference).astype(np.float64)
    e = mse(a, b)
    denom = float(np.mean(b * b))
    rel = e / denom if denom > 0 else (0.0 if e == 0 else math.inf)
    print(f"MSE {e:.6e}")
    print(f"relMSE {rel:.6e}")
    return 0


def cmd_pdftest(args) -> int:
    from . import stats as st

    if args.negative_control:
        results = [st.negative_control()]
    else:
        table = None
        if not args.no_eda:
            cfg = EdaTableConfig(ratio_bins=16, s_bins=16, mc_samples_per_bin=1024)
            table = get_table(st.default_medium(), cfg)
        results = st.run_all(table, quick=args.quick)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "some suites FAILED")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"render": cmd_render, "tabulate": cmd_tabulate, "compare": cmd_compare,
                "pdftest": cmd_pdftest}[args.command](args)
    except (SceneParseError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
