"""Versioned YAML scene format.

Example::

    version: 1
    units: {length: m, time: s}
    medium: {sigma_s: 4.5, sigma_a: 0.15, g: 0.3, eta: 1.0, c: 1.0}
    materials:
      white: {type: diffuse, albedo: [0.7, 0.7, 0.7]}
    geometry:
      - sphere: {center: [0.5, 0.3, 0.6], radius: 0.2, material: white}
      - quad: {origin: [0, 0, 0], edge1: [1, 0, 0], edge2: [0, 0, 1], material: white}
      - mesh: {path: bunny.stl, material: white}
    emitters:
      - {position: [0.5, 0.85, 0.6], intensity: [1, 1, 1], emission_start: 0}
    camera: {position: [0.5, 0.5, 0.02], look_at: [0.5, 0.5, 1], up: [0, 1, 0], fov: 60, resolution: [32, 32]}
    gate: {mode: gated, start: 1.0, width: 0.25, frames: 1, warp: true}

Lengths are converted to meters and times to seconds on parse; the medium
coefficients are per length unit and ``c`` is in length/time units. Mesh
paths are binary STL files, resolved relative to the scene file.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .gate import TIME_GATED, TRANSIENT, SensorGate
from .media import SPEED_OF_LIGHT, Medium
from .scene import Camera, Emitter, Material, Mesh, Quad, Scene, Sphere, read_stl

FORMAT_VERSION = 1
LENGTH_UNITS = {"m": 1.0, "cm": 1e-2, "mm": 1e-3}
TIME_UNITS = {"s": 1.0, "ns": 1e-9, "ps": 1e-12}
_SCI = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")
_MODES = {"gated": TIME_GATED, "transient": TRANSIENT}


class SceneParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class SceneDescription:
    medium: Medium
    emitters: list[Emitter]
    camera: Camera
    materials: dict[str, Material] = field(default_factory=dict)
    spheres: list[Sphere] = field(default_factory=list)
    quads: list[Quad] = field(default_factory=list)
    meshes: list[Mesh] = field(default_factory=list)
    gate: SensorGate = field(default_factory=SensorGate)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.emitters:
            raise SceneParseError("a scene needs at least one emitter")

    def build(self) -> Scene:
        return Scene(self.medium, self.emitters, self.camera, spheres=self.spheres, quads=self.quads,
                     meshes=self.meshes, materials=self.materials)


# -- node helpers -----------------------------------------------------------------

class _Ctx:
    """Walks a composed YAML node tree, keeping line numbers for error messages."""

    def __init__(self, node, where: str):
        self.node = node
        self.where = where

    @property
    def line(self) -> int:
        return self.node.start_mark.line + 1

    def fail(self, msg: str):
        raise SceneParseError(f"{self.where}: {msg}", self.line)

    def mapping(self, allowed: set, required: set = frozenset()) -> dict[str, "_Ctx"]:
        if not isinstance(self.node, yaml.MappingNode):
            self.fail("expected a mapping")
        out = {}
        for k, v in self.node.value:
            key = k.value
            if key not in allowed:
                raise SceneParseError(f"{self.where}: unknown field {key!r}", k.start_mark.line + 1)
            if key in out:
                raise SceneParseError(f"{self.where}: duplicate field {key!r}", k.start_mark.line + 1)
            out[key] = _Ctx(v, f"{self.where}.{key}")
        missing = required - set(out)
        if missing:
            self.fail(f"missing field(s) {sorted(missing)}")
        return out

    def seq(self) -> list["_Ctx"]:
        if not isinstance(self.node, yaml.SequenceNode):
            self.fail("expected a list")
        return [_Ctx(v, f"{self.where}[{i}]") for i, v in enumerate(self.node.value)]

    def scalar(self):
        if not isinstance(self.node, yaml.ScalarNode):
            self.fail("expected a scalar")
        return yaml.safe_load(yaml.serialize(self.node))

    def number(self) -> float:
        v = self.scalar()
        if isinstance(v, str) and _SCI.fullmatch(v.strip()):
            v = float(v)  # YAML 1.1 wants a dot in exponent floats ("1e-9")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}")
        return float(v)

    def integer(self) -> int:
        v = self.scalar()
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"expected an integer, got {v!r}")
        return v

    def string(self) -> str:
        v = self.scalar()
        if not isinstance(v, str):
            self.fail(f"expected a string, got {v!r}")
        return v

    def boolean(self) -> bool:
        v = self.scalar()
        if not isinstance(v, bool):
            self.fail(f"expected true/false, got {v!r}")
        return v

    def vec(self, n: int = 3) -> tuple:
        items = self.seq()
        if len(items) != n:
            self.fail(f"expected {n} numbers")
        return tuple(i.number() for i in items)

    def build(self, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except SceneParseError:
            raise
        except (ValueError, TypeError, OSError) as e:
            self.fail(str(e))


def _parse_units(ctx: Optional[_Ctx]) -> tuple[float, float]:
    if ctx is None:
        return 1.0, 1.0
    f = ctx.mapping({"length", "time"}, {"length", "time"})
    lu, tu = f["length"].string(), f["time"].string()
    if lu not in LENGTH_UNITS:
        f["length"].fail(f"unknown length unit {lu!r}; use one of {sorted(LENGTH_UNITS)}")
    if tu not in TIME_UNITS:
        f["time"].fail(f"unknown time unit {tu!r}; use one of {sorted(TIME_UNITS)}")
    return LENGTH_UNITS[lu], TIME_UNITS[tu]


def parse_scene(text: str, base_dir: Optional[str] = None) -> SceneDescription:
    """Parse and validate scene text; errors carry the offending line."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise SceneParseError(f"malformed YAML: {getattr(e, 'problem', e)}",
                              mark.line + 1 if mark else None) from None
    if root is None:
        raise SceneParseError("empty scene")
    top = _Ctx(root, "scene").mapping(
        {"version", "units", "medium", "materials", "geometry", "emitters", "camera", "gate"},
        {"version", "medium", "emitters", "camera"})
    version = top["version"].integer()
    if version != FORMAT_VERSION:
        top["version"].fail(f"unsupported format version {version}")
    L, T = _parse_units(top.get("units"))

    mf = top["medium"].mapping({"sigma_s", "sigma_a", "g", "eta", "c"}, {"sigma_s", "sigma_a"})
    c = mf["c"].number() * L / T if "c" in mf else SPEED_OF_LIGHT
    medium = top["medium"].build(Medium, mf["sigma_s"].number() / L, mf["sigma_a"].number() / L,
                                 mf["g"].number() if "g" in mf else 0.0,
                                 mf["eta"].number() if "eta" in mf else 1.0, c)

    materials = {}
    if "materials" in top:
        m = top["materials"]
        if not isinstance(m.node, yaml.MappingNode):
            m.fail("expected a mapping of material name to definition")
        for k, v in m.node.value:
            mc = _Ctx(v, f"materials.{k.value}")
            f = mc.mapping({"type", "albedo", "exponent"}, {"type"})
            kw = {"kind": f["type"].string()}
            if "albedo" in f:
                kw["albedo"] = f["albedo"].vec()
            if "exponent" in f:
                kw["exponent"] = f["exponent"].number()
            materials[k.value] = mc.build(Material, **kw)

    def scaled(v):
        return tuple(x * L for x in v)

    spheres, quads, meshes = [], [], []
    for g in top["geometry"].seq() if "geometry" in top else []:
        f = g.mapping({"sphere", "quad", "mesh"})
        if len(f) != 1:
            g.fail("each geometry entry has exactly one of sphere/quad/mesh")
        kind, body = next(iter(f.items()))
        if kind == "sphere":
            b = body.mapping({"center", "radius", "material"}, {"center", "radius"})
            r = b["radius"].number()
            if not r > 0:
                b["radius"].fail("radius must be positive")
            spheres.append(Sphere(scaled(b["center"].vec()), r * L,
                                  b["material"].string() if "material" in b else "default"))
        elif kind == "quad":
            b = body.mapping({"origin", "edge1", "edge2", "material"}, {"origin", "edge1", "edge2"})
            quads.append(Quad(scaled(b["origin"].vec()), scaled(b["edge1"].vec()), scaled(b["edge2"].vec()),
                              b["material"].string() if "material" in b else "default"))
        else:
            b = body.mapping({"path", "material"}, {"path"})
            path = b["path"].string()
            full = path if base_dir is None or os.path.isabs(path) else os.path.join(base_dir, path)
            tris = b["path"].build(read_stl, full) * L
            meshes.append(Mesh(path, b["material"].string() if "material" in b else "default", tris))
    for m in spheres + quads + meshes:
        if m.material != "default" and m.material not in materials:
            raise SceneParseError(f"geometry references unknown material {m.material!r}", top["geometry"].line)

    emitters = []
    for e in top["emitters"].seq():
        f = e.mapping({"position", "intensity", "emission_start"}, {"position"})
        kw = {"position": scaled(f["position"].vec())}
        if "intensity" in f:
            kw["intensity"] = f["intensity"].vec()
        if "emission_start" in f:
            kw["emission_start"] = f["emission_start"].number() * T
        emitters.append(e.build(Emitter, **kw))
    if not emitters:
        top["emitters"].fail("a scene needs at least one emitter")

    cf = top["camera"].mapping({"position", "look_at", "up", "fov", "resolution"}, {"position", "look_at"})
    ckw = {"position": scaled(cf["position"].vec()), "look_at": scaled(cf["look_at"].vec())}
    if "up" in cf:
        ckw["up"] = cf["up"].vec()
    if "fov" in cf:
        fov = cf["fov"].number()
        if not 0 < fov < 180:
            cf["fov"].fail("fov must lie in (0, 180) degrees")
        ckw["fov"] = fov
    if "resolution" in cf:
        res = cf["resolution"].seq()
        if len(res) != 2 or min(r.integer() for r in res) < 1:
            cf["resolution"].fail("resolution is [width, height] with positive integers")
        ckw["resolution"] = (res[0].integer(), res[1].integer())
    camera = top["camera"].build(Camera, **ckw)

    gate = SensorGate()
    if "gate" in top:
        gf = top["gate"].mapping({"mode", "start", "width", "frames", "warp", "profile"})
        gkw = {}
        if "mode" in gf:
            mode = gf["mode"].string()
            if mode not in _MODES:
                gf["mode"].fail(f"mode is one of {sorted(_MODES)}")
            gkw["mode"] = _MODES[mode]
        if "start" in gf:
            gkw["gate_start"] = gf["start"].number() * T
        if "width" in gf:
            w = gf["width"].number()
            if not w > 0:
                gf["width"].fail(f"gate width must be positive, got {w}")
            gkw["gate_width"] = w * T
        if "frames" in gf:
            gkw["frame_count"] = gf["frames"].integer()
        if "warp" in gf:
            gkw["warp"] = gf["warp"].boolean()
        if "profile" in gf:
            pf = gf["profile"].mapping({"times", "values"}, {"times", "values"})
            gkw["profile"] = "tabulated"
            gkw["profile_times"] = tuple(x.number() * T for x in pf["times"].seq())
            gkw["profile_values"] = tuple(x.number() for x in pf["values"].seq())
        gate = top["gate"].build(SensorGate, **gkw)

    return SceneDescription(medium, emitters, camera, materials, spheres, quads, meshes, gate, version)


def load_scene(path: str) -> SceneDescription:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def _vec(v) -> list:
    return [float(x) for x in v]


def serialize_scene(desc: SceneDescription) -> str:
    """SI-unit YAML that parses back to an equal description."""
    m = desc.medium
    doc: dict[str, Any] = {
        "version": desc.version,
        "units": {"length": "m", "time": "s"},
        "medium": {"sigma_s": m.sigma_s, "sigma_a": m.sigma_a, "g": m.g, "eta": m.eta, "c": m.c},
        "materials": {k: {"type": v.kind, "albedo": _vec(v.albedo), "exponent": float(v.exponent)}
                      for k, v in desc.materials.items()},
        "geometry": [{"sphere": {"center": _vec(s.center), "radius": float(s.radius), "material": s.material}}
                     for s in desc.spheres]
                    + [{"quad": {"origin": _vec(q.origin), "edge1": _vec(q.edge1), "edge2": _vec(q.edge2),
                                 "material": q.material}} for q in desc.quads]
                    + [{"mesh": {"path": me.path, "material": me.material}} for me in desc.meshes],
        "emitters": [{"position": _vec(e.position), "intensity": _vec(e.intensity),
                      "emission_start": float(e.emission_start)} for e in desc.emitters],
    }
    c = desc.camera
    doc["camera"] = {"position": _vec(c.position), "look_at": _vec(c.look_at), "up": _vec(c.up),
                     "fov": float(c.fov), "resolution": [int(c.resolution[0]), int(c.resolution[1])]}
    g = desc.gate
    gate = {"mode": "gated" if g.mode == TIME_GATED else "transient", "start": float(g.gate_start),
            "width": float(g.gate_width), "frames": int(g.frame_count), "warp": bool(g.warp)}
    if g.profile == "tabulated":
        gate["profile"] = {"times": _vec(g.profile_times), "values": _vec(g.profile_values)}
    doc["gate"] = gate
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
