"""Scene geometry (spheres + triangles under a BVH), materials, emitters, camera."""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._jit import jit
from .geometry import Hit, Ray, from_local, vcross, vdot, vscale, vsub
from .media import Medium

DIFFUSE, SPECULAR, GLOSSY = 0, 1, 2
MATERIAL_KINDS = {"diffuse": DIFFUSE, "specular": SPECULAR, "glossy": GLOSSY}

RAY_EPS = 1e-7
LEAF_SIZE = 4

SceneArrays = namedtuple(
    "SceneArrays",
    ["tri_v0", "tri_e1", "tri_e2", "tri_n", "tri_mat",
     "sph_c", "sph_r", "sph_mat",
     "node_min", "node_max", "node_left", "node_start", "node_count",
     "mat_kind", "mat_albedo", "mat_exp"],
)


@dataclass(frozen=True)
class Material:
    kind: str = "diffuse"
    albedo: tuple[float, float, float] = (0.8, 0.8, 0.8)
    exponent: float = 20.0  # glossy lobe sharpness

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}")
        if len(self.albedo) != 3 or min(self.albedo) < 0:
            raise ValueError("albedo must be three non-negative values")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: str = "default"


@dataclass(frozen=True)
class Quad:
    """Parallelogram ``origin + a*edge1 + b*edge2`` for a, b in [0, 1]."""

    origin: tuple[float, float, float]
    edge1: tuple[float, float, float]
    edge2: tuple[float, float, float]
    material: str = "default"

    def triangles(self) -> np.ndarray:
        o, e1, e2 = (np.asarray(v, dtype=np.float64) for v in (self.origin, self.edge1, self.edge2))
        return np.array([[o, o + e1, o + e1 + e2], [o, o + e1 + e2, o + e2]])


@dataclass(frozen=True)
class Mesh:
    """Triangle soup loaded from a binary STL (or given inline)."""

    path: Optional[str] = None
    material: str = "default"
    triangles: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Emitter:
    """Isotropic pulsed point source; intensity in W/sr per channel."""

    position: tuple[float, float, float]
    intensity: tuple[float, float, float] = (1.0, 1.0, 1.0)
    emission_start: float = 0.0

    def __post_init__(self):
        if min(self.intensity) < 0:
            raise ValueError("emitter intensity must be non-negative")


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov: float = 40.0  # vertical, degrees
    resolution: tuple[int, int] = (32, 32)  # (width, height)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fwd = np.asarray(self.look_at, float) - np.asarray(self.position, float)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, float))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def params(self) -> np.ndarray:
        """(position, forward, right*tan, up*tan) packed for the kernels."""
        fwd, right, up = self.basis()
        w, h = self.resolution
        th = math.tan(math.radians(self.fov) / 2)
        tw = th * w / h
        return np.array([self.position, fwd, right * tw, up * th], dtype=np.float64)

    def ray(self, px: float, py: float) -> Ray:
        """Ray through continuous pixel coordinates (0,0 = top-left corner)."""
        p = self.params()
        w, h = self.resolution
        sx = 2.0 * px / w - 1.0
        sy = 1.0 - 2.0 * py / h
        d = p[1] + sx * p[2] + sy * p[3]
        return Ray(p[0], d / np.linalg.norm(d))


def read_stl(path: str) -> np.ndarray:
    """Binary STL triangle soup as an (n, 3, 3) array."""
    with open(path, "rb") as fh:
        fh.read(80)
        n = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        data = np.frombuffer(fh.read(n * rec.itemsize), dtype=rec, count=n)
    return data["v"].astype(np.float64)


def write_stl(path: str, triangles: np.ndarray) -> None:
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    data = np.zeros(len(tris), dtype=rec)
    nrm = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    lens = np.linalg.norm(nrm, axis=1, keepdims=True)
    data["n"] = nrm / np.where(lens > 0, lens, 1.0)
    data["v"] = tris
    with open(path, "wb") as fh:
        fh.write(b"darts_tof binary stl".ljust(80, b"\0"))
        fh.write(np.uint32(len(tris)).tobytes())
        fh.write(data.tobytes())


def build_bvh(tris: np.ndarray):
    """Median-split BVH. Returns (order, node_min, node_max, left, start, count)."""
    n = len(tris)
    if n == 0:
        return (np.zeros(0, np.int64), np.zeros((1, 3)), np.zeros((1, 3)),
                np.full(1, -1, np.int64), np.zeros(1, np.int64), np.zeros(1, np.int64))
    lo_all = tris.min(axis=1)
    hi_all = tris.max(axis=1)
    cen = tris.mean(axis=1)
    order = np.arange(n)
    nmin, nmax, left, start, count = [], [], [], [], []

    def new_node():
        nmin.append(None); nmax.append(None)
        left.append(-1); start.append(0); count.append(0)
        return len(nmin) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        nmin[node] = lo_all[idx].min(axis=0)
        nmax[node] = hi_all[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            start[node], count[node] = s, e - s
            continue
        c = cen[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
        mid = (s + e) // 2
        lc = new_node()
        rc = new_node()
        assert rc == lc + 1
        left[node] = lc
        stack.append((rc, mid, e))
        stack.append((lc, s, mid))
    return (order, np.array(nmin), np.array(nmax), np.array(left, np.int64),
            np.array(start, np.int64), np.array(count, np.int64))


class Scene:
    """Compiled scene: flat arrays for the kernels plus the Python-level metadata."""

    def __init__(self, medium: Medium, emitters: Sequence[Emitter], camera: Optional[Camera] = None,
                 spheres: Sequence[Sphere] = (), quads: Sequence[Quad] = (), meshes: Sequence[Mesh] = (),
                 materials: Optional[dict[str, Material]] = None):
        self.medium = medium
        self.emitters = list(emitters)
        self.camera = camera
        self.spheres, self.quads, self.meshes = list(spheres), list(quads), list(meshes)
        self.materials = dict(materials or {})
        self.materials.setdefault("default", Material())
        names = list(self.materials)
        mid = {name: i for i, name in enumerate(names)}

        def lookup(name):
            if name not in mid:
                raise ValueError(f"unknown material {name!r}")
            return mid[name]

        tri_list, tri_mat = [], []
        for q in self.quads:
            tri_list.append(q.triangles())
            tri_mat += [lookup(q.material)] * 2
        for m in self.meshes:
            t = m.triangles if m.triangles is not None else read_stl(m.path)
            t = np.asarray(t, dtype=np.float64).reshape(-1, 3, 3)
            tri_list.append(t)
            tri_mat += [lookup(m.material)] * len(t)
        tris = np.concatenate(tri_list) if tri_list else np.zeros((0, 3, 3))
        tri_mat = np.array(tri_mat, dtype=np.int64)
        order, nmin, nmax, left, start, count = build_bvh(tris)
        tris, tri_mat = tris[order], tri_mat[order]
        e1 = tris[:, 1] - tris[:, 0]
        e2 = tris[:, 2] - tris[:, 0]
        nrm = np.cross(e1, e2)
        nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-300)

        self.arrays = SceneArrays(
            tri_v0=np.ascontiguousarray(tris[:, 0]), tri_e1=np.ascontiguousarray(e1),
            tri_e2=np.ascontiguousarray(e2), tri_n=np.ascontiguousarray(nrm),
            tri_mat=tri_mat,
            sph_c=np.array([s.center for s in self.spheres], dtype=np.float64).reshape(-1, 3),
            sph_r=np.array([s.radius for s in self.spheres], dtype=np.float64),
            sph_mat=np.array([lookup(s.material) for s in self.spheres], dtype=np.int64),
            node_min=nmin.astype(np.float64), node_max=nmax.astype(np.float64),
            node_left=left, node_start=start, node_count=count,
            mat_kind=np.array([MATERIAL_KINDS[self.materials[k].kind] for k in names], dtype=np.int64),
            mat_albedo=np.array([self.materials[k].albedo for k in names], dtype=np.float64).reshape(-1, 3),
            mat_exp=np.array([self.materials[k].exponent for k in names], dtype=np.float64),
        )
        self.material_names = names

    @property
    def n_triangles(self) -> int:
        return len(self.arrays.tri_mat)

    def emitter_arrays(self):
        pos = np.array([e.position for e in self.emitters], dtype=np.float64).reshape(-1, 3)
        inten = np.array([e.intensity for e in self.emitters], dtype=np.float64).reshape(-1, 3)
        t0 = np.array([e.emission_start for e in self.emitters], dtype=np.float64)
        return pos, inten, t0

    def intersect(self, ray: Ray) -> Optional[Hit]:
        stack = np.empty(64, dtype=np.int64)
        t, n, mat = intersect_nb(self.arrays, tuple(ray.origin), tuple(ray.direction), ray.t_max, stack)
        if mat < 0:
            return None
        return Hit(t, ray.at(t), np.array(n), int(mat))


def intersect(scene: Scene, ray: Ray) -> Optional[Hit]:
    return scene.intersect(ray)


@jit
def _slab(o, inv, bmin, bmax, t_max):
    t0 = 0.0
    t1 = t_max
    for a in range(3):
        ta = (bmin[a] - o[a]) * inv[a]
        tb = (bmax[a] - o[a]) * inv[a]
        if ta > tb:
            ta, tb = tb, ta
        # nan from 0*inf: treat the slab as unbounded on that axis
        if ta == ta and ta > t0:
            t0 = ta
        if tb == tb and tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@jit
def intersect_nb(sa, o, d, t_max, stack):
    """Nearest hit in (RAY_EPS, t_max). Returns (t, normal, material or -1)."""
    best = t_max
    bn = (0.0, 0.0, 0.0)
    bm = -1
    for i in range(sa.sph_r.shape[0]):
        c = (sa.sph_c[i, 0], sa.sph_c[i, 1], sa.sph_c[i, 2])
        oc = vsub(o, c)
        b = vdot(oc, d)
        cc = vdot(oc, oc) - sa.sph_r[i] * sa.sph_r[i]
        disc = b * b - cc
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        t = -b - sq
        if t <= RAY_EPS:
            t = -b + sq
        if RAY_EPS < t < best:
            best = t
            p = (o[0] + d[0] * t - c[0], o[1] + d[1] * t - c[1], o[2] + d[2] * t - c[2])
            bn = vscale(p, 1.0 / sa.sph_r[i])
            bm = sa.sph_mat[i]
    if sa.tri_mat.shape[0] > 0:
        inv = (1.0 / d[0], 1.0 / d[1], 1.0 / d[2])
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _slab(o, inv, sa.node_min[node], sa.node_max[node], best):
                continue
            cnt = sa.node_count[node]
            if cnt > 0:
                s0 = sa.node_start[node]
                for k in range(s0, s0 + cnt):
                    e1 = (sa.tri_e1[k, 0], sa.tri_e1[k, 1], sa.tri_e1[k, 2])
                    e2 = (sa.tri_e2[k, 0], sa.tri_e2[k, 1], sa.tri_e2[k, 2])
                    pv = vcross(d, e2)
                    det = vdot(e1, pv)
                    if abs(det) < 1e-14:
                        continue
                    idet = 1.0 / det
                    tv = (o[0] - sa.tri_v0[k, 0], o[1] - sa.tri_v0[k, 1], o[2] - sa.tri_v0[k, 2])
                    u = vdot(tv, pv) * idet
                    if u < 0.0 or u > 1.0:
                        continue
                    qv = vcross(tv, e1)
                    v = vdot(d, qv) * idet
                    if v < 0.0 or u + v > 1.0:
                        continue
                    t = vdot(e2, qv) * idet
                    if RAY_EPS < t < best:
                        best = t
                        bn = (sa.tri_n[k, 0], sa.tri_n[k, 1], sa.tri_n[k, 2])
                        bm = sa.tri_mat[k]
            else:
                lc = sa.node_left[node]
                stack[sp] = lc
                stack[sp + 1] = lc + 1
                sp += 2
    return best, bn, bm


@jit
def occluded_nb(sa, o, d, dist, stack):
    _, _, m = intersect_nb(sa, o, d, dist * (1.0 - 1e-9) - RAY_EPS, stack)
    return m >= 0


@jit
def reflect(wi, n):
    """Mirror ``wi`` (pointing away from the surface) about ``n``."""
    c = 2.0 * vdot(wi, n)
    return (n[0] * c - wi[0], n[1] * c - wi[1], n[2] * c - wi[2])


@jit
def bsdf_eval_nb(sa, mat, n, wi, wo):
    """BSDF times |cos| at the outgoing side; ``wi``/``wo`` point away from the surface."""
    kind = sa.mat_kind[mat]
    ci = vdot(wi, n)
    co = vdot(wo, n)
    if ci * co <= 0.0 or kind == SPECULAR:
        return 0.0, 0.0, 0.0
    a = sa.mat_albedo[mat]
    co = abs(co)
    if kind == DIFFUSE:
        s = co / math.pi
    else:
        nf = n if ci > 0.0 else vscale(n, -1.0)
        r = reflect(wi, nf)
        ex = sa.mat_exp[mat]
        cr = vdot(r, wo)
        if cr <= 0.0:
            return 0.0, 0.0, 0.0
        s = (ex + 2.0) / (2.0 * math.pi) * cr ** ex * co
    return a[0] * s, a[1] * s, a[2] * s


@jit
def bsdf_sample_nb(sa, mat, n, wi, u1, u2):
    """Returns (wo, weight rgb = f*|cos|/pdf, ok). Weight is zero when ok is False."""
    kind = sa.mat_kind[mat]
    a = sa.mat_albedo[mat]
    ci = vdot(wi, n)
    nf = n if ci > 0.0 else vscale(n, -1.0)
    zero = (0.0, 0.0, 0.0)
    if kind == DIFFUSE:
        ct = math.sqrt(u1)
        wo = from_local(ct, 2.0 * math.pi * u2, nf)
        return wo, (a[0], a[1], a[2]), True
    if kind == SPECULAR:
        return reflect(wi, nf), (a[0], a[1], a[2]), True
    ex = sa.mat_exp[mat]
    r = reflect(wi, nf)
    ca = u1 ** (1.0 / (ex + 1.0))
    wo = from_local(ca, 2.0 * math.pi * u2, r)
    co = vdot(wo, nf)
    if co <= 0.0:
        return wo, zero, False
    s = (ex + 2.0) / (ex + 1.0) * co
    return wo, (a[0] * s, a[1] * s, a[2] * s), True


@jit
def bsdf_is_delta(sa, mat):
    return sa.mat_kind[mat] == SPECULAR
