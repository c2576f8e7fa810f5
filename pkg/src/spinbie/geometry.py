"""Boundary discretizations: closed curves in the plane and closed triangulated surfaces.

Planar points are represented by complex numbers ``x + 1j*y``.  This is purely a
storage convenience for geometry; the bivector ``e12`` of the algebra is kept
distinct from Python's imaginary unit everywhere else in the package.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Curve2D",
    "Surface3D",
    "make_circle",
    "make_ellipse",
    "make_corner_curve",
    "make_icosphere",
    "merge_surfaces",
    "refine",
    "mesh_to_json",
    "mesh_from_json",
    "save_mesh",
    "load_mesh",
    "MAX_SUBDIVISIONS",
]

MAX_SUBDIVISIONS = 5


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Curve2D:
    """Quadrature discretization of a closed, counterclockwise planar curve.

    Attributes
    ----------
    nodes : ndarray of complex, shape (M,)
        Node positions.
    dz : ndarray of complex
        Parametric derivative at each node (parameter runs over [0, 2*pi)).
    d2z : ndarray of complex
        Second parametric derivative (used for curvature diagnostics).
    weights : ndarray of float
        Trapezoidal weights ``|z'(s_i)| * ds``.
    params : ndarray of float
        Parameter values of the nodes.
    corner_flags : ndarray of int
        Indices of nodes adjacent to corners (empty for smooth curves).
    kind, spec : str, dict
        Recipe used to build the curve, so that it can be refined.
    """

    nodes: np.ndarray
    dz: np.ndarray
    d2z: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    corner_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    kind: str = "custom"
    spec: dict = field(default_factory=dict)

    ambient_dim = 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        m = self.nodes.shape[0]
        if m == 0:
            raise ValueError("empty curve")
        for name in ("dz", "d2z", "weights", "params"):
            if getattr(self, name).shape != (m,):
                raise ValueError(f"{name} must have shape ({m},)")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if m % 2:
            raise ValueError(f"node count must be even for the alternating-point rule, got {m}")

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def tangent(self) -> np.ndarray:
        return self.dz / np.abs(self.dz)

    @property
    def normal(self) -> np.ndarray:
        """Outward unit normal ``-j t`` as complex numbers."""
        return -1j * self.tangent

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.nodes.real, self.nodes.imag])

    @property
    def normal_vectors(self) -> np.ndarray:
        nu = self.normal
        return np.column_stack([nu.real, nu.imag])

    @property
    def curvature(self) -> np.ndarray:
        return np.imag(np.conj(self.dz) * self.d2z) / np.abs(self.dz) ** 3

    @property
    def length(self) -> float:
        return float(self.weights.sum())

    @property
    def local_width(self) -> np.ndarray:
        """Distance to the next node, a proxy for the local mesh width."""
        return np.maximum(
            np.abs(np.roll(self.nodes, -1) - self.nodes),
            np.abs(np.roll(self.nodes, 1) - self.nodes),
        )

    def winding_number(self, point: complex) -> float:
        ang = np.angle(np.roll(self.nodes, -1) - point) - np.angle(self.nodes - point)
        ang = (ang + np.pi) % (2 * np.pi) - np.pi
        return float(ang.sum() / (2 * np.pi))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points, dtype=complex))
        return np.array([abs(self.winding_number(p)) > 0.5 for p in pts])


def _curve_from_param(
    z: Callable, dz: Callable, d2z: Callable, m: int, kind: str, spec: dict
) -> Curve2D:
    if m % 2 or m < 8:
        raise ValueError(f"M must be even and at least 8, got {m}")
    s = 2 * np.pi * np.arange(m) / m
    zp = dz(s)
    return Curve2D(
        nodes=z(s), dz=zp, d2z=d2z(s), weights=np.abs(zp) * (2 * np.pi / m),
        params=s, kind=kind, spec=spec,
    )


def make_circle(radius: float, m: int, center: complex = 0.0) -> Curve2D:
    """Circle with ``m`` equispaced nodes."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = complex(center)
    return _curve_from_param(
        lambda s: c + radius * np.exp(1j * s),
        lambda s: 1j * radius * np.exp(1j * s),
        lambda s: -radius * np.exp(1j * s),
        m, "circle", {"radius": radius, "M": m, "center": [c.real, c.imag]},
    )


def make_ellipse(a: float, b: float, m: int) -> Curve2D:
    """Axis-aligned ellipse with semi-axes ``a`` and ``b``."""
    if a <= 0 or b <= 0:
        raise ValueError("semi-axes must be positive")
    return _curve_from_param(
        lambda s: a * np.cos(s) + 1j * b * np.sin(s),
        lambda s: -a * np.sin(s) + 1j * b * np.cos(s),
        lambda s: -a * np.cos(s) - 1j * b * np.sin(s),
        m, "ellipse", {"a": a, "b": b, "M": m},
    )


def _kress_map(tau: np.ndarray, q: float):
    """Grading map of [0, 1] onto itself, behaving like tau**q at both ends."""
    p, r = tau**q, (1 - tau) ** q
    v = p / (p + r)
    dv = q * tau ** (q - 1) * (1 - tau) ** (q - 1) / (p + r) ** 2
    # derivative of dv, for curvature diagnostics
    num = q * ((q - 1) * tau ** (q - 2) * (1 - tau) ** (q - 1) - (q - 1) * tau ** (q - 1) * (1 - tau) ** (q - 2))
    dnum = q * tau ** (q - 1) * (1 - tau) ** (q - 1)
    dden = 2 * (p + r) * (q * tau ** (q - 1) - q * (1 - tau) ** (q - 1))
    d2v = (num * (p + r) ** 2 - dnum * dden) / (p + r) ** 4
    return v, dv, d2v


def make_corner_curve(theta: float, m: int, grading_q: float = 3.0) -> Curve2D:
    """Lens of two circular arcs through 0 and 1 meeting at interior angle ``theta``.

    Each arc carries ``m/2`` nodes at the midpoints of a uniform grid in the
    graded parameter, so no node sits on a corner and node spacing shrinks like
    ``t**grading_q`` towards both corners.  The lower arc runs from 0 to 1, the
    upper arc back from 1 to 0, giving counterclockwise orientation.
    """
    if not 0 < theta < np.pi + 1e-15:
        raise ValueError(f"theta must lie in (0, pi], got {theta}")
    if grading_q < 1:
        raise ValueError("grading exponent must be at least 1")
    if m % 2 or m < 8:
        raise ValueError(f"M must be even and at least 8, got {m}")
    half = theta / 2
    radius = 0.5 / np.sin(half)
    offset = 0.5 * np.cos(half) / np.sin(half)
    per_arc = m // 2
    tau = (np.arange(per_arc) + 0.5) / per_arc
    v, dv, d2v = _kress_map(tau, grading_q)
    nodes, dz, d2z = [], [], []
    # the global parameter covers each arc over an interval of length pi
    scale = 1.0 / np.pi
    for center, start in ((0.5 + 1j * offset, -np.pi / 2 - half), (0.5 - 1j * offset, np.pi / 2 - half)):
        ang = start + 2 * half * v
        e = np.exp(1j * ang)
        da = 2 * half * dv * scale
        d2a = 2 * half * d2v * scale**2
        nodes.append(center + radius * e)
        dz.append(1j * radius * e * da)
        d2z.append(radius * e * (1j * d2a - da**2))
    s = np.concatenate([np.pi * tau, np.pi + np.pi * tau])
    dz_all = np.concatenate(dz)
    flags = np.array([0, per_arc - 1, per_arc, m - 1])
    return Curve2D(
        nodes=np.concatenate(nodes), dz=dz_all, d2z=np.concatenate(d2z),
        weights=np.abs(dz_all) * (2 * np.pi / m), params=s, corner_flags=flags,
        kind="corner", spec={"theta": theta, "M": m, "grading_q": grading_q},
    )


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Surface3D:
    """Closed, outward-oriented flat-triangle surface mesh.

    Attributes
    ----------
    vertices : ndarray, shape (V, 3)
    triangles : ndarray of int, shape (M, 3)
        Counterclockwise when seen from outside.
    part : ndarray of int, shape (M,)
        Connected-component label of each triangle (used by multi-body problems).
    kind, spec : str, dict
        Recipe for refinement.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    part: np.ndarray | None = None
    kind: str = "custom"
    spec: dict = field(default_factory=dict)
    check_closed: bool = True

    ambient_dim = 3

    def __post_init__(self):
        if self.part is None:
            object.__setattr__(self, "part", np.zeros(len(self.triangles), dtype=int))
        v = self.vertices[self.triangles]
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        area2 = np.linalg.norm(cross, axis=1)
        object.__setattr__(self, "_corners", v)
        object.__setattr__(self, "_cross", cross)
        object.__setattr__(self, "_area2", area2)
        self.validate()

    def validate(self) -> None:
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (M, 3)")
        if self.triangles.shape[0] == 0:
            raise ValueError("empty surface")
        scale = np.max(np.ptp(self.vertices, axis=0))
        if np.any(self._area2 <= 1e-14 * scale**2):
            raise ValueError("degenerate triangle")
        if self.check_closed:
            e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
            directed = {tuple(x) for x in e.tolist()}
            if len(directed) != len(e) or any((b, a) not in directed for a, b in directed):
                raise ValueError("surface is not closed and consistently oriented")

    @property
    def size(self) -> int:
        return self.triangles.shape[0]

    @property
    def corners(self) -> np.ndarray:
        return self._corners

    @property
    def centroids(self) -> np.ndarray:
        return self._corners.mean(axis=1)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * self._area2

    @property
    def weights(self) -> np.ndarray:
        return self.areas

    @property
    def normals(self) -> np.ndarray:
        return self._cross / self._area2[:, None]

    @property
    def normal_vectors(self) -> np.ndarray:
        return self.normals

    @property
    def points(self) -> np.ndarray:
        return self.centroids

    @property
    def diameters(self) -> np.ndarray:
        v = self._corners
        return np.max(np.stack([
            np.linalg.norm(v[:, 0] - v[:, 1], axis=1),
            np.linalg.norm(v[:, 1] - v[:, 2], axis=1),
            np.linalg.norm(v[:, 2] - v[:, 0], axis=1),
        ]), axis=0)

    @property
    def local_width(self) -> np.ndarray:
        return self.diameters

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def solid_angle(self, points: np.ndarray, parts=None) -> np.ndarray:
        """Solid angle subtended by the (selected parts of the) surface, over 4*pi.

        Equals 1 for points enclosed by a closed part and 0 outside
        (Van Oosterom-Strackee formula).
        """
        pts = np.atleast_2d(points)
        sel = np.ones(self.size, bool) if parts is None else np.isin(self.part, parts)
        v = self._corners[sel]
        out = np.zeros(len(pts))
        for i, p in enumerate(pts):
            a, b, c = v[:, 0] - p, v[:, 1] - p, v[:, 2] - p
            la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
            num = np.einsum("ij,ij->i", a, np.cross(b, c))
            den = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + np.einsum("ij,ij->i", a, c) * lb + np.einsum("ij,ij->i", b, c) * la
            out[i] = 2 * np.arctan2(num, den).sum() / (4 * np.pi)
        return out

    def region_of(self, points: np.ndarray) -> np.ndarray:
        """Index of the enclosing part plus one, or 0 outside every part."""
        pts = np.atleast_2d(points)
        region = np.zeros(len(pts), dtype=int)
        for p in np.unique(self.part):
            inside = self.solid_angle(pts, parts=[p]) > 0.5
            region[inside] = p + 1
        return region

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


_ICOSA_PHI = (1 + 5**0.5) / 2
_ICOSA_V = np.array([
    [-1, _ICOSA_PHI, 0], [1, _ICOSA_PHI, 0], [-1, -_ICOSA_PHI, 0], [1, -_ICOSA_PHI, 0],
    [0, -1, _ICOSA_PHI], [0, 1, _ICOSA_PHI], [0, -1, -_ICOSA_PHI], [0, 1, -_ICOSA_PHI],
    [_ICOSA_PHI, 0, -1], [_ICOSA_PHI, 0, 1], [-_ICOSA_PHI, 0, -1], [-_ICOSA_PHI, 0, 1],
], dtype=float)
_ICOSA_F = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
])


def _subdivide(vertices: np.ndarray, triangles: np.ndarray):
    """Split every triangle into four through its edge midpoints."""
    verts = list(map(tuple, vertices))
    cache: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            cache[key] = len(verts)
            verts.append(tuple((vertices[a] + vertices[b]) / 2))
        return cache[key]

    tris = []
    for a, b, c in triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), np.array(tris)


def make_icosphere(radius: float, subdivisions: int, center=(0.0, 0.0, 0.0)) -> Surface3D:
    """Recursively subdivided icosahedron with vertices projected to the sphere."""
    if not 0 <= subdivisions <= MAX_SUBDIVISIONS:
        raise ValueError(f"subdivisions must lie in [0, {MAX_SUBDIVISIONS}], got {subdivisions}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = _ICOSA_V / np.linalg.norm(_ICOSA_V, axis=1)[:, None]
    t = _ICOSA_F.copy()
    for _ in range(subdivisions):
        v, t = _subdivide(v, t)
        v /= np.linalg.norm(v, axis=1)[:, None]
    # enforce outward orientation
    c = v[t].mean(axis=1)
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    flip = np.einsum("ij,ij->i", n, c) < 0
    t[flip] = t[flip][:, ::-1]
    ctr = np.asarray(center, dtype=float)
    return Surface3D(
        vertices=radius * v + ctr, triangles=t, kind="icosphere",
        spec={"radius": radius, "subdivisions": subdivisions, "center": ctr.tolist()},
    )


def merge_surfaces(surfaces: list[Surface3D]) -> Surface3D:
    """Concatenate closed surfaces, labelling each as its own part."""
    verts, tris, parts, offset = [], [], [], 0
    for i, s in enumerate(surfaces):
        verts.append(s.vertices)
        tris.append(s.triangles + offset)
        parts.append(np.full(s.size, i))
        offset += len(s.vertices)
    return Surface3D(
        vertices=np.concatenate(verts), triangles=np.concatenate(tris), part=np.concatenate(parts),
        kind="merged", spec={"parts": [{"kind": s.kind, "spec": s.spec} for s in surfaces]},
    )


def refine(mesh):
    """Return the same geometry at doubled resolution.

    Curves double their node count; surfaces split every triangle in four.
    Spheres are re-projected onto the exact surface.
    """
    if isinstance(mesh, Curve2D):
        sp = mesh.spec
        if mesh.kind == "circle":
            return make_circle(sp["radius"], 2 * sp["M"], complex(*sp["center"]))
        if mesh.kind == "ellipse":
            return make_ellipse(sp["a"], sp["b"], 2 * sp["M"])
        if mesh.kind == "corner":
            return make_corner_curve(sp["theta"], 2 * sp["M"], sp["grading_q"])
        raise ValueError(f"cannot refine a curve of kind {mesh.kind!r}")
    if isinstance(mesh, Surface3D):
        if mesh.kind == "icosphere":
            sp = mesh.spec
            return make_icosphere(sp["radius"], sp["subdivisions"] + 1, sp["center"])
        if mesh.kind == "merged":
            return merge_surfaces([
                refine(_rebuild(p["kind"], p["spec"])) for p in mesh.spec["parts"]
            ])
        v, t = _subdivide(mesh.vertices, mesh.triangles)
        return Surface3D(v, t, np.repeat(mesh.part, 4), kind=mesh.kind, spec=dict(mesh.spec))
    raise TypeError(f"unsupported mesh type {type(mesh).__name__}")


def _rebuild(kind: str, spec: dict):
    if kind == "icosphere":
        return make_icosphere(spec["radius"], spec["subdivisions"], spec["center"])
    raise ValueError(f"cannot rebuild mesh of kind {kind!r}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _cplx(a: np.ndarray) -> list:
    return np.column_stack([a.real, a.imag]).tolist()


def mesh_to_json(mesh) -> dict:
    """Serialize a mesh to a plain dictionary.

    Curves store node positions, parametric derivatives and weights as
    ``[re, im]`` pairs; surfaces store vertices, triangles and part labels, with
    derived centroids, areas and normals included for convenience.
    """
    if isinstance(mesh, Curve2D):
        return {
            "type": "curve2d", "kind": mesh.kind, "spec": mesh.spec,
            "nodes": _cplx(mesh.nodes), "dz": _cplx(mesh.dz), "d2z": _cplx(mesh.d2z),
            "weights": mesh.weights.tolist(), "params": mesh.params.tolist(),
            "normals": _cplx(mesh.normal), "corner_flags": mesh.corner_flags.tolist(),
        }
    if isinstance(mesh, Surface3D):
        return {
            "type": "surface3d", "kind": mesh.kind, "spec": mesh.spec,
            "vertices": mesh.vertices.tolist(), "triangles": mesh.triangles.tolist(),
            "part": mesh.part.tolist(), "centroids": mesh.centroids.tolist(),
            "areas": mesh.areas.tolist(), "normals": mesh.normals.tolist(),
        }
    raise TypeError(f"unsupported mesh type {type(mesh).__name__}")


def mesh_from_json(data: dict):
    def c(key):
        a = np.asarray(data[key], dtype=float)
        return a[:, 0] + 1j * a[:, 1]

    if data.get("type") == "curve2d":
        return Curve2D(
            nodes=c("nodes"), dz=c("dz"), d2z=c("d2z"),
            weights=np.asarray(data["weights"], float), params=np.asarray(data["params"], float),
            corner_flags=np.asarray(data.get("corner_flags", []), int),
            kind=data.get("kind", "custom"), spec=data.get("spec", {}),
        )
    if data.get("type") == "surface3d":
        return Surface3D(
            vertices=np.asarray(data["vertices"], float), triangles=np.asarray(data["triangles"], int),
            part=np.asarray(data.get("part", [0] * len(data["triangles"])), int),
            kind=data.get("kind", "custom"), spec=data.get("spec", {}),
        )
    raise ValueError(f"unknown mesh type {data.get('type')!r}")


def save_mesh(mesh, path) -> None:
    Path(path).write_text(json.dumps(mesh_to_json(mesh)))


def load_mesh(path):
    return mesh_from_json(json.loads(Path(path).read_text()))
