"""Boundary value problem drivers built on the spin integral equations.

Every driver follows the same pattern: assemble the Cauchy operator, compose
it with pointwise projections into a system acting on the even-grade block,
solve densely, and hand back the density together with evaluators of the
represented field.

Representation formulas
-----------------------
For a density ``h`` on the boundary of a bounded domain with outward normal
``nu``, the spin ansatz gives::

    interior:  F(x) = -1/2 int Psi_k(y - x) (1 - nu(y)) h(y) dsigma(y)
    exterior:  F(x) = -1/2 int Psi_k(y - x) (1 + nu(y)) h(y) dsigma(y)

whose boundary traces are ``E_k^+ S^- h`` and ``E_k^- S^+ h``.  All numerical
factors used by the drivers are collected in :data:`CONSTANTS`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import clifford as cl
from . import kernels as kn
from .geometry import Curve2D, Surface3D, merge_surfaces
from .operators import (
    GridFunction,
    RealLinearOperator,
    assemble_E,
    assemble_K_2d,
    assemble_reflection,
    projections,
    pointwise,
)
from .quadrature import QuadratureOptions, panel_integrals
from .solvers import (
    SolveReport,
    SweepReport,
    restricted_map,
    singular_values,
    solve_dense,
    solve_minnorm,
    weighted_matrix,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CONSTANTS",
    "EVEN_BLADES",
    "NearBoundaryError",
    "MaterialParams",
    "ElectromagneticField",
    "TransmissionConfig",
    "BoundarySolution",
    "Dirichlet2DSolution",
    "ClassicalDirichlet2DSolution",
    "TransmissionSolution",
    "spin_system",
    "solve_dirac_generic",
    "solve_dirichlet2d_spin",
    "nyquist_modes",
    "solve_dirichlet2d_classical",
    "solve_maxwell_pec",
    "solve_transmission",
    "evaluate_field",
    "energy_flux",
    "grade_residual",
    "corner_sweep",
    "spin_singular_values",
    "resonance_sweep",
    "nansatz_system",
]

#: Numerical factors of the drivers, in one place.
CONSTANTS = {
    # T+ S- g for scalar g: the right-hand side of the planar Dirichlet system
    "dirichlet2d_rhs": 0.5,
    # the printed complex planar equation equals this multiple of T+S-N+E+S-
    # applied to the rescaled density (left-hand side 2 g)
    "dirichlet2d_printed_scale": 8.0,
    # T+ S+ N+ equals this multiple of the Maxwell multiplier M
    "maxwell_multiplier_scale": 0.5,
    # field representation coefficient (both sides, see module docstring)
    "representation": -0.5,
    # Cauchy reproduction: F = +C f inside, F = -C f outside
    "interior_cauchy": 1.0,
    "exterior_cauchy": -1.0,
    # classical planar double layer equation (I + K) f = 2 g
    "double_layer_rhs": 2.0,
}

EVEN_BLADES = {2: (0, 3), 3: (0, 4, 5, 6)}


class NearBoundaryError(ValueError):
    """Evaluation point too close to the boundary for the plain quadrature."""


# ---------------------------------------------------------------------------
# Physical data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaterialParams:
    """Homogeneous isotropic material at angular frequency ``omega``.

    Derived quantities use the principal square root:
    ``alpha = sqrt(epsilon + i sigma_c / omega)``, ``beta = mu ** -0.5`` and
    ``k = omega * alpha / beta``.
    """

    epsilon: float = 1.0
    mu: float = 1.0
    sigma_c: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        if not (self.epsilon > 0 and self.mu > 0 and self.omega > 0 and self.sigma_c >= 0):
            raise ValueError("need epsilon > 0, mu > 0, omega > 0 and sigma_c >= 0")

    @property
    def alpha(self) -> complex:
        return complex(np.sqrt(complex(self.epsilon, self.sigma_c / self.omega)))

    @property
    def beta(self) -> float:
        return float(self.mu ** -0.5)

    @property
    def k(self) -> complex:
        return self.omega * self.alpha / self.beta

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        return cls(**{key: float(d[key]) for key in ("epsilon", "mu", "sigma_c", "omega") if key in d})


@dataclass(frozen=True)
class ElectromagneticField:
    """Electric and magnetic fields ``x -> (E, H)`` solving Maxwell's equations at wave number ``k``."""

    k: complex
    fields: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    description: dict = field(default_factory=dict)

    def multivector(self, points: np.ndarray) -> np.ndarray:
        """Packed field ``F = E + *H`` at ``points`` (..., 3)."""
        e, h = self.fields(np.asarray(points, dtype=float))
        return kn.pack_maxwell(e, h)

    @classmethod
    def dipole(cls, k, source, moment) -> "ElectromagneticField":
        return cls(complex(k), kn.maxwell_dipole(k, source, moment),
                   {"type": "dipole", "position": list(map(float, source)), "moment": _cjson(moment), "k": _cjson(k)})

    @classmethod
    def plane_wave(cls, k, direction, polarization) -> "ElectromagneticField":
        return cls(complex(k), kn.maxwell_plane_wave(k, direction, polarization),
                   {"type": "plane-wave", "direction": list(map(float, direction)),
                    "polarization": _cjson(polarization), "k": _cjson(k)})

    @classmethod
    def zero(cls, k) -> "ElectromagneticField":
        def fields(x):
            z = np.zeros(np.shape(x), dtype=complex)
            return z, z.copy()

        return cls(complex(k), fields, {"type": "zero"})

    @classmethod
    def from_dict(cls, d: dict, k=None) -> "ElectromagneticField":
        kind = d.get("type")
        kk = _parse_complex(d["k"]) if "k" in d else k
        if kk is None:
            raise ValueError("incident field needs a wave number")
        if kind == "dipole":
            return cls.dipole(kk, np.asarray(d["position"], float), _parse_cvec(d["moment"]))
        if kind == "plane-wave":
            return cls.plane_wave(kk, np.asarray(d["direction"], float), _parse_cvec(d["polarization"]))
        if kind == "zero":
            return cls.zero(kk)
        raise ValueError(f"unknown incident field type {kind!r}")


def _cjson(v):
    v = np.asarray(v, dtype=complex)
    if v.ndim == 0:
        return [float(v.real), float(v.imag)]
    return [[float(a.real), float(a.imag)] for a in v]


def _parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _parse_cvec(v) -> np.ndarray:
    return np.array([_parse_complex(a) for a in v], dtype=complex)


@dataclass(frozen=True)
class TransmissionConfig:
    """Disjoint bounded bodies in a homogeneous background.

    Attributes
    ----------
    surfaces : list of Surface3D
        Closed outward-oriented boundaries of the bodies ``Omega_1 .. Omega_N``.
    materials : list of MaterialParams
        ``materials[0]`` is the unbounded region ``Omega_0``, ``materials[j]``
        fills body ``j``.
    """

    surfaces: tuple
    materials: tuple

    def __post_init__(self):
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "materials", tuple(self.materials))
        self.validate()

    @property
    def n_bodies(self) -> int:
        return len(self.surfaces)

    def validate(self) -> None:
        if not 1 <= self.n_bodies <= 3:
            raise ValueError("transmission supports between one and three bodies")
        if len(self.materials) != self.n_bodies + 1:
            raise ValueError("need one material per body plus the exterior material")
        omegas = {m.omega for m in self.materials}
        if len(omegas) != 1:
            raise ValueError("all materials must share the angular frequency")
        for i, a in enumerate(self.surfaces):
            for j, b in enumerate(self.surfaces):
                if i != j and np.any(b.solid_angle(a.vertices) > 0.5):
                    raise ValueError(f"surfaces {i} and {j} are not disjoint (nested or touching bodies)")


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------

def _pm(mesh, which: str):
    return projections(assemble_reflection(mesh, which))


def spin_system(mesh, k=0.0, side: str = "interior", part: str = "tangential", E: RealLinearOperator | None = None):
    """Spin system operators for the generic Dirac problems.

    interior: ``A = T+ S- N(+/-) E_k+ S-`` and right-hand side map ``T+ S-``;
    exterior: ``A = T+ S+ N(+/-) E_k- S+`` and right-hand side map ``T+ S+``.

    Returns
    -------
    system : RealLinearOperator
        ``A`` compressed to the even-grade block.
    rhs_map : RealLinearOperator
        Full pointwise right-hand side map.
    trace_map : RealLinearOperator
        ``E_k+ S-`` or ``E_k- S+`` (density to Dirac trace).
    """
    if side not in ("interior", "exterior"):
        raise ValueError("side must be 'interior' or 'exterior'")
    if part not in ("tangential", "normal"):
        raise ValueError("part must be 'tangential' or 'normal'")
    E = assemble_E(mesh, k) if E is None else E
    Ep, Em = projections(E)
    Np, Nm = _pm(mesh, "N")
    Sp, Sm = _pm(mesh, "S")
    Tp, _ = _pm(mesh, "T")
    npart = Np if part == "tangential" else Nm
    if side == "interior":
        rhs_map = Tp @ Sm
        trace_map = Ep @ Sm
    else:
        rhs_map = Tp @ Sp
        trace_map = Em @ Sp
    a = rhs_map @ npart @ trace_map
    even = EVEN_BLADES[mesh.ambient_dim]
    return a.restrict(even, even), rhs_map, trace_map


def _as_values(mesh, g) -> np.ndarray:
    vals = g.values if isinstance(g, GridFunction) else np.asarray(g, dtype=complex)
    d = 1 << mesh.ambient_dim
    if vals.shape != (mesh.size, d):
        raise ValueError(f"boundary data must have shape ({mesh.size}, {d})")
    return vals


def _embed_even(mesh, x: np.ndarray) -> np.ndarray:
    n = mesh.ambient_dim
    out = np.zeros((mesh.size, 1 << n), dtype=complex)
    out[:, list(EVEN_BLADES[n])] = x.reshape(mesh.size, -1)
    return out


@dataclass
class BoundarySolution:
    """Density, Dirac trace and diagnostics of a generic solve."""

    mesh: object
    k: complex
    side: str
    h: GridFunction
    trace: GridFunction
    report: SolveReport

    def field(self, points: np.ndarray, guard: bool = True) -> np.ndarray:
        return evaluate_field(self.h, self.mesh, self.k, self.side, points, guard=guard)


def solve_dirac_generic(mesh, k, side: str, part: str, g, E: RealLinearOperator | None = None,
                        range_tol: float = 1e-8, method: str = "lu",
                        exclude: np.ndarray | None = None, deflate: int | None = None) -> BoundarySolution:
    """Solve an interior or exterior Dirac problem with prescribed tangential or normal part.

    Parameters
    ----------
    mesh : Curve2D or Surface3D
    k : complex
        Wave number (``0`` in the plane).
    side : {"interior", "exterior"}
    part : {"tangential", "normal"}
        Which part of the trace is prescribed: ``N+ f = g`` or ``N- f = g``.
    g : GridFunction or ndarray (M, 2**n)
        Boundary data in the range of the corresponding projection.
    method : {"lu", "minnorm"}
        ``"lu"`` raises :class:`SingularSystemError` on a singular system;
        ``"minnorm"`` returns the minimum-norm solution orthogonal to the
        columns of ``exclude`` (flattened even-block coordinates), dropping
        ``deflate`` singular values (or those below a relative ``1e-10``).

    Returns
    -------
    BoundarySolution
        ``h`` has vanishing odd part; ``trace`` is the Dirac trace ``f``.
    """
    vals = _as_values(mesh, g)
    np_, nm_ = _pm(mesh, "N")
    other = nm_ if part == "tangential" else np_
    scale = max(np.abs(vals).max(), 1e-300)
    if np.abs(other.apply(vals)).max() > range_tol * scale:
        raise ValueError(f"data is not in the range of the {part} projection")
    system, rhs_map, trace_map = spin_system(mesh, k, side, part, E)
    rhs = rhs_map.apply(vals)[:, list(EVEN_BLADES[mesh.ambient_dim])]
    if method == "lu":
        x, report = solve_dense(system, rhs.ravel())
    elif method == "minnorm":
        x, report = solve_minnorm(system, rhs.ravel(), exclude=exclude, deflate=deflate)
    else:
        raise ValueError("method must be 'lu' or 'minnorm'")
    h = _embed_even(mesh, x)
    f = trace_map.apply(h)
    return BoundarySolution(mesh, complex(k), side, GridFunction(mesh, h), GridFunction(mesh, f), report)


# ---------------------------------------------------------------------------
# Field evaluation
# ---------------------------------------------------------------------------

def _check_distance(mesh, points: np.ndarray) -> None:
    pts = mesh.points
    width = mesh.local_width
    for lo in range(0, len(points), 512):
        p = points[lo : lo + 512]
        d = np.linalg.norm(p[:, None, :] - pts[None, :, :], axis=2)
        j = np.argmin(d, axis=1)
        bad = d[np.arange(len(p)), j] < 2.0 * width[j]
        if np.any(bad):
            i = lo + int(np.nonzero(bad)[0][0])
            raise NearBoundaryError(
                f"point {points[i]} lies within two local mesh widths of the boundary"
            )


def _as_points(mesh, points) -> np.ndarray:
    if mesh.ambient_dim == 2:
        z = kn.as_complex_points(points)
        z = np.atleast_1d(z)
        return np.stack([z.real, z.imag], axis=-1)
    return np.atleast_2d(np.asarray(points, dtype=float))


def _cauchy_sum(mesh, k, points: np.ndarray, density: np.ndarray, options: QuadratureOptions | None = None) -> np.ndarray:
    """``sum_j int_{T_j} Psi_k(y - x) dsigma(y) * density_j`` (Clifford product) at ``points``."""
    n = mesh.ambient_dim
    d = 1 << n
    if n == 2:
        if complex(k) != 0:
            raise ValueError("planar fields are static only")
        z = points[:, 0] + 1j * points[:, 1]
        psi = kn.psi2_static(mesh.nodes[None, :] - z[:, None]) * mesh.weights[None, :]
        coeff = [psi.real, psi.imag]
        blades = (1, 2)
    else:
        coeff = panel_integrals(mesh, k, targets=points, options=options)
        blades = (0, 1, 2, 3)
    mats = cl.left_matrix(np.eye(d)[list(blades)])
    out = np.zeros((len(points), d), dtype=complex)
    for c, lb in zip(coeff, mats):
        out += (c @ density) @ lb.T
    return out


def evaluate_field(h, mesh, k, side: str, points, guard: bool = True,
                   options: QuadratureOptions | None = None) -> np.ndarray:
    """Field represented by a spin density at points off the boundary.

    ``side="interior"`` uses ``-1/2 int Psi_k (1 - nu) h`` and
    ``side="exterior"`` uses ``-1/2 int Psi_k (1 + nu) h``.

    Raises
    ------
    NearBoundaryError
        If ``guard`` and a point is closer than two local mesh widths.
    """
    vals = _as_values(mesh, h)
    pts = _as_points(mesh, points)
    if guard:
        _check_distance(mesh, pts)
    nu = cl.vector(mesh.normal_vectors)
    sign = -1.0 if side == "interior" else 1.0 if side == "exterior" else None
    if sign is None:
        raise ValueError("side must be 'interior' or 'exterior'")
    dens = vals + sign * cl.clifford_mul(nu, vals)
    out = CONSTANTS["representation"] * _cauchy_sum(mesh, k, pts, dens, options)
    return out


def energy_flux(trace, mesh) -> complex:
    """Discrete ``sum_i w_i (f_i, nu_i f_i)``; nonnegative for radiating traces at real ``k``."""
    f = _as_values(mesh, trace)
    nf = cl.clifford_mul(cl.vector(mesh.normal_vectors), f)
    return complex(np.sum(mesh.weights * np.sum(f.conj() * nf, axis=1)))


def grade_residual(values: np.ndarray) -> float:
    """Relative size of the scalar and trivector parts of sampled 3D fields."""
    v = np.asarray(values)
    bad = np.abs(v[..., 0]) ** 2 + np.abs(v[..., 7]) ** 2
    return float(np.sqrt(bad.sum() / max(np.sum(np.abs(v) ** 2), 1e-300)))


# ---------------------------------------------------------------------------
# Planar Dirichlet problems
# ---------------------------------------------------------------------------

def _cauchy_integral_2d(curve: Curve2D, values: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``(1/(2 pi i)) int f(w) dw / (w - z)`` by the trapezoidal rule (``i`` standing for ``j``)."""
    dw = curve.tangent * curve.weights
    return ((values * dw)[None, :] / (curve.nodes[None, :] - z[:, None])).sum(axis=1) / (2j * np.pi)


@dataclass
class Dirichlet2DSolution:
    """Spin solution of the planar Dirichlet problem.

    ``trace`` holds ``u + j v`` on the boundary as complex numbers (the
    bivector ``j`` represented by ``1j``); ``density`` is the even density of
    the spin system.
    """

    curve: Curve2D
    density: GridFunction
    trace: np.ndarray
    report: SolveReport

    def interior(self, points, guard: bool = True) -> np.ndarray:
        """Analytic function ``u + j v`` at interior points (complex numbers)."""
        z = np.atleast_1d(kn.as_complex_points(points))
        if guard:
            _check_distance(self.curve, _as_points(self.curve, z))
        return _cauchy_integral_2d(self.curve, self.trace, z)


def nyquist_modes(mesh, blades: int) -> np.ndarray:
    """Columns ``(-1)**i`` in each of ``blades`` interleaved components."""
    alt = (-1.0) ** np.arange(mesh.size)
    out = np.zeros((mesh.size * blades, blades))
    for b in range(blades):
        out[b::blades, b] = alt
    return out


def solve_dirichlet2d_spin(curve: Curve2D, g) -> Dirichlet2DSolution:
    """Planar Dirichlet problem ``u = g`` on the boundary by the spin equation.

    Solves ``T+ S- N+ E+ S- h = T+ S- g`` on the even block.  The trace
    ``E+ S- h`` carries ``u`` in the scalar and ``v`` in the ``e12`` blade.

    The interior tangential problem fixes ``v`` only up to a constant, so the
    system has a one-dimensional kernel.  It is solved in the minimum-norm
    sense with the alternating grid modes removed from the solution space;
    the resulting conjugate ``v`` has zero weighted mean up to discretization
    error.
    """
    g = np.asarray(g)
    if np.iscomplexobj(g) and np.abs(g.imag).max() > 0:
        raise ValueError("Dirichlet data must be real")
    g = np.real(g).astype(float)
    data = np.zeros((curve.size, 4), dtype=complex)
    data[:, 0] = g
    sol = solve_dirac_generic(curve, 0.0, "interior", "tangential", data,
                              method="minnorm", exclude=nyquist_modes(curve, 2), deflate=1)
    f = sol.trace.values
    trace = f[:, 0].real + 1j * f[:, 3].real
    return Dirichlet2DSolution(curve, sol.h, trace, sol.report)


@dataclass
class ClassicalDirichlet2DSolution:
    """Double-layer solution ``u = D f`` of the planar Dirichlet problem."""

    curve: Curve2D
    density: np.ndarray
    report: SolveReport

    def interior(self, points, guard: bool = True) -> np.ndarray:
        z = np.atleast_1d(kn.as_complex_points(points))
        if guard:
            _check_distance(self.curve, _as_points(self.curve, z))
        return _cauchy_integral_2d(self.curve, self.density.astype(complex), z).real


def classical_system(curve: Curve2D, rule: str | None = None) -> np.ndarray:
    """Matrix of ``I + K`` with the default double layer rule of :func:`assemble_K_2d`.

    The alternating rule is avoided here because it maps the grid mode
    ``(-1)**i`` to its negative and makes the matrix singular.
    """
    return np.eye(curve.size) + assemble_K_2d(curve, rule).matrix().real


def solve_dirichlet2d_classical(curve: Curve2D, g, rule: str | None = None) -> ClassicalDirichlet2DSolution:
    """Solve ``(I + K) f = 2 g``; the harmonic extension is the double layer of ``f``."""
    g = np.real(np.asarray(g)).astype(float)
    a = classical_system(curve, rule)
    f, report = solve_dense(a, CONSTANTS["double_layer_rhs"] * g)
    return ClassicalDirichlet2DSolution(curve, f, report)


# ---------------------------------------------------------------------------
# Maxwell scattering from a perfect conductor
# ---------------------------------------------------------------------------

@dataclass
class PECSolution(BoundarySolution):
    incident: ElectromagneticField | None = None

    def scattered(self, points, guard: bool = True) -> np.ndarray:
        """Scattered field ``E + *H`` at exterior points, shape (P, 8)."""
        return self.field(points, guard)


def solve_maxwell_pec(surface: Surface3D, k, incident: ElectromagneticField,
                      options: QuadratureOptions | None = None) -> PECSolution:
    """Scattering from a perfect electric conductor.

    The total field ``F0 + F`` must have vanishing tangential part, so the
    exterior Dirac problem is solved with data ``g = -N+ F0`` through
    ``T+ S+ N+ E_k- S+ h = T+ S+ g`` on the even block.
    """
    if not isinstance(surface, Surface3D):
        raise TypeError("the conductor must be a closed surface")
    k = kn.check_wavenumber(k)
    if k == 0:
        raise ValueError("the exterior Maxwell problem needs k != 0")
    f0 = incident.multivector(surface.centroids)
    np_, _ = _pm(surface, "N")
    g = -np_.apply(f0)
    E = assemble_E(surface, k, options=options)
    sol = solve_dirac_generic(surface, k, "exterior", "tangential", g, E=E)
    return PECSolution(surface, k, "exterior", sol.h, sol.trace, sol.report, incident)


# ---------------------------------------------------------------------------
# Transmission problems
# ---------------------------------------------------------------------------

def material_map(nu: np.ndarray, material: MaterialParams) -> np.ndarray:
    """Pointwise blocks of ``f -> nu ^ (T+f / beta + T-f / alpha) + nu -| (beta T+f + alpha T-f)``."""
    nuv = cl.vector(nu).real
    a, b = material.alpha, material.beta
    even_mask = (cl.tables(3).grades % 2 == 0)
    scale_w = np.where(even_mask, 1.0 / b, 1.0 / a)
    scale_c = np.where(even_mask, b, a)
    return cl.wedge_matrix(nuv) * scale_w[None, None, :] + cl.lcontract_matrix(nuv) * scale_c[None, None, :]


def _sub_surface(surface: Surface3D, part: int) -> Surface3D:
    sel = surface.part == part
    return Surface3D(surface.vertices, surface.triangles[sel], kind="part", spec={"part": int(part)})


@dataclass
class TransmissionSolution:
    """Density on all interfaces and evaluators of the region fields."""

    config: TransmissionConfig
    sigma: Surface3D
    h: GridFunction
    traces: list
    report: SolveReport
    incident: ElectromagneticField | None = None

    def _part_slice(self, j: int) -> slice:
        idx = np.nonzero(self.sigma.part == j - 1)[0]
        return slice(idx[0], idx[-1] + 1)

    def field(self, region: int, points, guard: bool = True) -> np.ndarray:
        """Field of region ``region`` (0 = exterior, scattered part only)."""
        mats = self.config.materials
        if region == 0:
            return evaluate_field(self.h, self.sigma, mats[0].k, "exterior", points, guard)
        sub = _sub_surface(self.sigma, region - 1)
        hv = self.h.values[self._part_slice(region)]
        return evaluate_field(hv, sub, mats[region].k, "interior", points, guard)

    def region_traces(self, points: np.ndarray, panels: np.ndarray) -> list[np.ndarray]:
        """One-sided boundary limits ``E_j S_j h`` at arbitrary points on the panels."""
        return _region_traces(self.config, self.sigma, self.h.values, points, panels)

    def jump_residual(self, data: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                      points: np.ndarray | None = None, panels: np.ndarray | None = None) -> float:
        """Relative residual of the interface conditions between the collocation points.

        The one-sided limits of all region fields are formed at points of the
        panels other than the centroids (three interior points per panel by
        default) and inserted into ``sum_j N_j f_j + g``.
        """
        if points is None:
            points, panels = _offcentre_points(self.sigma)
        g = self._data_at(points, panels, data)
        traces = self.region_traces(points, panels)
        res = g.copy()
        normals = self.sigma.normals[panels]
        parts = self.sigma.part[panels]
        res += np.einsum("pab,pb->pa", material_map(-normals, self.config.materials[0]), traces[0])
        for j in range(1, self.config.n_bodies + 1):
            sel = parts == j - 1
            res[sel] += np.einsum("pab,pb->pa", material_map(normals[sel], self.config.materials[j]), traces[j][sel])
        w = self.sigma.areas[panels]
        num = np.sqrt(np.sum(w * np.sum(np.abs(res) ** 2, axis=1)))
        den = np.sqrt(np.sum(w * np.sum(np.abs(g) ** 2, axis=1)))
        return float(num / den)

    def _data_at(self, points, panels, data):
        if data is not None:
            return np.asarray(data(points, self.sigma.normals[panels]), dtype=complex)
        if self.incident is None:
            raise ValueError("no incident field or data function")
        f0 = self.incident.multivector(points)
        return np.einsum("pab,pb->pa", material_map(-self.sigma.normals[panels], self.config.materials[0]), f0)


def _offcentre_points(surface: Surface3D):
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    pts = np.einsum("qa,pad->pqd", bary, surface.corners).reshape(-1, 3)
    panels = np.repeat(np.arange(surface.size), 3)
    return pts, panels


def _trace_at(mesh: Surface3D, k, sign: float, density: np.ndarray, points, panels) -> np.ndarray:
    """``(I + sign E_k)/2`` applied to ``density`` at boundary ``points`` on ``panels``."""
    p = panel_integrals(mesh, k, targets=points, self_panels=panels)
    nu = cl.vector(mesh.normals)
    u = cl.clifford_mul(nu, density)
    mats = cl.left_matrix(np.eye(8)[:4])
    ev = np.zeros((len(points), 8), dtype=complex)
    for c, lb in zip(p, mats):
        ev += 2.0 * (c @ u) @ lb.T
    return 0.5 * (density[panels] + sign * ev)


def _region_traces(config: TransmissionConfig, sigma: Surface3D, h: np.ndarray, points, panels) -> list:
    mats = config.materials
    nu = cl.vector(sigma.normals)
    s0 = 0.5 * (h + cl.clifford_mul(nu, h))
    out = [_trace_at(sigma, mats[0].k, -1.0, s0, points, panels)]
    for j in range(1, config.n_bodies + 1):
        sel = np.nonzero(sigma.part == j - 1)[0]
        sub = _sub_surface(sigma, j - 1)
        hj = h[sel]
        sj = 0.5 * (hj - cl.clifford_mul(nu[sel], hj))
        local = np.full(sigma.size, -1)
        local[sel] = np.arange(len(sel))
        lp = local[panels]
        tj = np.zeros((len(points), 8), dtype=complex)
        on = lp >= 0
        if np.any(on):
            tj[on] = _trace_at(sub, mats[j].k, 1.0, sj, points[on], lp[on])
        out.append(tj)
    return out


def transmission_system(config: TransmissionConfig, options: QuadratureOptions | None = None):
    """Dense matrix of ``B_Sigma S_Sigma`` on the merged interface."""
    sigma = merge_surfaces(list(config.surfaces))
    m = sigma.size
    mats = config.materials
    normals = sigma.normals
    nu = cl.vector(normals)
    e0 = assemble_E(sigma, mats[0].k, options=options)
    _, e0m = projections(e0)
    n0 = pointwise(sigma, material_map(-normals, mats[0]), "N0")
    s0 = pointwise(sigma, 0.5 * (np.eye(8)[None] + cl.left_matrix(nu)), "S0")
    a = (n0 @ e0m @ s0).matrix()
    a = a.reshape(m, 8, m, 8)
    for j in range(1, config.n_bodies + 1):
        sel = np.nonzero(sigma.part == j - 1)[0]
        sub = _sub_surface(sigma, j - 1)
        ej = assemble_E(sub, mats[j].k, options=options)
        ejp, _ = projections(ej)
        nj = pointwise(sub, material_map(sub.normals, mats[j]), f"N{j}")
        sj = pointwise(sub, 0.5 * (np.eye(8)[None] - cl.left_matrix(cl.vector(sub.normals))), f"S{j}")
        block = (nj @ ejp @ sj).matrix().reshape(len(sel), 8, len(sel), 8)
        a[np.ix_(sel, np.arange(8), sel, np.arange(8))] += block
    return sigma, a.reshape(8 * m, 8 * m)


def solve_transmission(config: TransmissionConfig, incident: ElectromagneticField | None = None,
                       data: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                       options: QuadratureOptions | None = None) -> TransmissionSolution:
    """Scattering by disjoint homogeneous bodies.

    Solves ``B_Sigma S_Sigma h = -g`` with ``g = N_0 F_inc``.  Instead of an
    incident field a data function ``data(points, normals) -> g`` may be
    given, which is how manufactured jump data enter.

    The field in body ``j`` is ``-1/2 int Psi_{k_j} (1 - nu_j) h`` and the
    scattered field outside is the same expression with ``nu_0 = -nu``.
    """
    if (incident is None) == (data is None):
        raise ValueError("give exactly one of an incident field or a data function")
    if incident is not None and abs(incident.k - config.materials[0].k) > 1e-12 * max(1.0, abs(incident.k)):
        raise ValueError("incident field wave number differs from the exterior material")
    t0 = time.perf_counter()
    sigma, a = transmission_system(config, options)
    cent = sigma.centroids
    if data is not None:
        g = np.asarray(data(cent, sigma.normals), dtype=complex)
    else:
        g = np.einsum("pab,pb->pa", material_map(-sigma.normals, config.materials[0]), incident.multivector(cent))
    x, report = solve_dense(a, -g.ravel())
    h = x.reshape(sigma.size, 8)
    logger.info("transmission solve with %d panels took %.1fs", sigma.size, time.perf_counter() - t0)
    pts, panels = sigma.centroids, np.arange(sigma.size)
    traces = _region_traces(config, sigma, h, pts, panels)
    return TransmissionSolution(config, sigma, GridFunction(sigma, h), traces, report, incident)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def spin_singular_values(curve: Curve2D, E: RealLinearOperator | None = None) -> np.ndarray:
    """Weighted singular values of the planar spin system with the grid modes ``(-1)**i`` removed.

    The smallest value approximates the one-dimensional continuous kernel
    (the free constant in the harmonic conjugate).
    """
    system, _, _ = spin_system(curve, 0.0, "interior", "tangential", E)
    sw = np.repeat(np.sqrt(curve.weights), 2)
    q, _ = np.linalg.qr(nyquist_modes(curve, 2) * sw[:, None], mode="complete")
    return np.linalg.svd(weighted_matrix(system) @ q[:, 2:], compute_uv=False)


def corner_sweep(thetas, m: int = 256, grading_q: float = 3.0, deflate_spin: int = 1) -> SweepReport:
    """Condition numbers of the classical and spin planar systems on lens curves.

    ``kappa_spin`` drops the ``deflate_spin`` smallest singular values (by
    default the one belonging to the continuous kernel); the classical
    system is used as is.
    """
    from .geometry import make_corner_curve

    report = SweepReport("theta")
    for theta in thetas:
        curve = make_corner_curve(float(theta), m, grading_q)
        sk = np.linalg.svd(_weighted_real(classical_system(curve), curve.weights), compute_uv=False)
        ss = spin_singular_values(curve)
        kk = sk[0] / sk[-1]
        ks = ss[0] / ss[-1 - deflate_spin]
        report.rows.append({
            "theta": float(theta), "nodes": m, "kappa_classical": float(kk),
            "kappa_spin": float(ks), "ratio": float(kk / ks),
            "inverse_norm_classical": float(1 / sk[-1]),
            "inverse_norm_spin": float(1 / ss[-1 - deflate_spin]),
            "norm_classical": float(sk[0]), "norm_spin": float(ss[0]),
            "sigma_kernel_spin": float(ss[-1]),
        })
        logger.info("theta=%.4f kappa(I+K)=%.3e kappa(spin)=%.3e", theta, kk, ks)
    ratios = report.column("ratio")
    report.summary = {
        "monotone": bool(np.all(np.diff(ratios) > 0)),
        "growth": float(ratios[-1] / ratios[0]),
        "deflated_spin": deflate_spin,
    }
    return report


def _weighted_real(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    s = np.sqrt(w)
    return (s[:, None] * a) / s[None, :]


def nansatz_system(surface: Surface3D, k, E: RealLinearOperator | None = None):
    """Restricted map ``N+ E_k-`` from ``N+ L2`` to ``N+ L2`` (comparison formulation)."""
    E = assemble_E(surface, k) if E is None else E
    _, em = projections(E)
    np_, _ = _pm(surface, "N")
    return restricted_map(np_ @ em, np_, np_)


def resonance_sweep(surface: Surface3D, ks, options: QuadratureOptions | None = None) -> SweepReport:
    """Smallest singular values of the spin and N-ansatz exterior systems against ``k``."""
    report = SweepReport("k")
    for k in ks:
        t0 = time.perf_counter()
        E = assemble_E(surface, k, options=options)
        system, _, _ = spin_system(surface, k, "exterior", "tangential", E)
        s_spin = singular_values(system)
        s_n = np.linalg.svd(nansatz_system(surface, k, E).matrix, compute_uv=False)
        report.rows.append({
            "k": float(np.real(k)), "sigma_min_spin": float(s_spin[-1]), "sigma_max_spin": float(s_spin[0]),
            "sigma_min_nansatz": float(s_n[-1]), "sigma_max_nansatz": float(s_n[0]),
        })
        logger.info("k=%.3f spin %.3e N-ansatz %.3e (%.1fs)", np.real(k), s_spin[-1], s_n[-1], time.perf_counter() - t0)
    sp, sn = report.column("sigma_min_spin"), report.column("sigma_min_nansatz")
    report.summary = {"spin_variation": float(sp.max() / sp.min()), "nansatz_variation": float(sn.max() / sn.min())}
    return report
