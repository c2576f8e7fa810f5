"""Command line experiment runner.

Each subcommand reads one JSON configuration, validates it completely, runs
one driver and writes a self-describing ``report.json`` plus CSV tables into
the output directory.

Exit codes: ``0`` success, ``1`` configuration or output-path error, ``2``
numerical failure (a report with the diagnostic is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger("spinbie.cli")

#: environment variable holding the default output directory
OUT_ENV = "SPINBIE_OUT"
DEFAULT_OUT = "spinbie-out"

EXPERIMENTS = (
    "dirichlet2d",
    "dirichlet2d-classical",
    "maxwell-pec",
    "dirac-generic",
    "transmission",
    "mellin-sweep",
    "corner-sweep",
    "resonance-sweep",
    "calderon-check",
    "operator-dump",
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

# keys accepted by every experiment, and the extra keys of each one
_COMMON_KEYS = {"experiment", "seed", "description"}
_EXPERIMENT_KEYS = {
    "dirichlet2d": {"geometry", "data", "test_points"},
    "dirichlet2d-classical": {"geometry", "data", "test_points", "rule"},
    "maxwell-pec": {"geometry", "k", "incident", "manufactured_dipole", "test_points"},
    "dirac-generic": {"geometry", "k", "side", "part", "source", "moment", "test_points"},
    "transmission": {"bodies", "materials", "incident", "test_points"},
    "mellin-sweep": {"thetas", "xi_max", "xi_per_sign", "xi_uniform"},
    "corner-sweep": {"thetas", "nodes", "grading_q"},
    "resonance-sweep": {"geometry", "k_min", "k_max", "steps"},
    "calderon-check": {"geometry", "k"},
    "operator-dump": {"geometry", "k", "operator"},
}
_REQUIRED = {
    "dirichlet2d": {"geometry"},
    "dirichlet2d-classical": {"geometry"},
    "maxwell-pec": {"geometry", "k"},
    "dirac-generic": {"geometry", "k", "side", "part", "source", "moment"},
    "transmission": {"bodies", "materials", "incident"},
    "mellin-sweep": {"thetas"},
    "corner-sweep": {"thetas"},
    "resonance-sweep": {"geometry", "k_min", "k_max", "steps"},
    "calderon-check": {"geometry"},
    "operator-dump": {"geometry", "operator"},
}


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``params`` holds the experiment specific entries exactly as given; they
    are converted to numerical objects by the driver before any computation.
    """

    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        kind = data.get("experiment", experiment)
        if experiment is not None and kind != experiment:
            raise ConfigError(f"config is for {kind!r} but the subcommand is {experiment!r}")
        if kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        allowed = _COMMON_KEYS | _EXPERIMENT_KEYS[kind]
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown keys for {kind}: {', '.join(unknown)}")
        missing = sorted(_REQUIRED[kind] - set(data))
        if missing:
            raise ConfigError(f"missing keys for {kind}: {', '.join(missing)}")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        params = {key: value for key, value in data.items() if key not in _COMMON_KEYS}
        return cls(kind, params, seed, dict(data, experiment=kind))


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    """Read and validate a JSON configuration; JSON syntax errors report line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(data, experiment)


def _number(value, name: str, positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer")
    if positive and value <= 0:
        raise ConfigError(f"{name} must be positive")
    return int(value) if integer else float(value)


def _complex(value, name: str) -> complex:
    """Complex numbers are written as numbers or ``[re, im]`` pairs."""
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(_number(value[0], name), _number(value[1], name))
    return complex(_number(value, name))


def _cvector(value, name: str, length: int) -> list:
    if not isinstance(value, list) or len(value) != length:
        raise ConfigError(f"{name} must be a list of {length} entries")
    return [_complex(v, f"{name}[{i}]") for i, v in enumerate(value)]


def _wavenumber(value, name: str = "k") -> complex:
    k = _complex(value, name)
    if k.imag < 0:
        raise ConfigError(f"{name} must have nonnegative imaginary part")
    return k


def _geometry(spec, dims=(2, 3)):
    """Build a mesh from ``{"type": ...}``; deferred import keeps startup cheap."""
    from . import geometry as geo

    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("geometry must be an object with a 'type'")
    kind = spec["type"]
    try:
        if kind == "circle" and 2 in dims:
            return geo.make_circle(_number(spec.get("radius", 1.0), "radius", True),
                                   _number(spec["nodes"], "nodes", True, True))
        if kind == "ellipse" and 2 in dims:
            return geo.make_ellipse(_number(spec["a"], "a", True), _number(spec["b"], "b", True),
                                    _number(spec["nodes"], "nodes", True, True))
        if kind == "corner" and 2 in dims:
            return geo.make_corner_curve(_number(spec["theta"], "theta", True),
                                         _number(spec["nodes"], "nodes", True, True),
                                         _number(spec.get("grading_q", 3.0), "grading_q", True))
        if kind == "icosphere" and 3 in dims:
            center = spec.get("center", [0.0, 0.0, 0.0])
            if not isinstance(center, list) or len(center) != 3:
                raise ConfigError("center must have three coordinates")
            return geo.make_icosphere(_number(spec.get("radius", 1.0), "radius", True),
                                      _number(spec["subdivisions"], "subdivisions", integer=True),
                                      [_number(c, "center") for c in center])
        if kind == "mesh-file":
            mesh = geo.load_mesh(spec["path"])
            if mesh.ambient_dim not in dims:
                raise ConfigError(f"mesh file has dimension {mesh.ambient_dim}, expected {dims}")
            return mesh
    except KeyError as exc:
        raise ConfigError(f"geometry {kind!r} is missing {exc.args[0]!r}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file: {exc}") from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid geometry: {exc}") from exc
    raise ConfigError(f"geometry type {kind!r} is not available here (dimensions {dims})")


def _test_points(spec, mesh, rng, region: str, default_count: int = 20):
    """Explicit points, or random points at a fraction of the mesh size.

    Random interior points are boundary nodes scaled towards the origin by a
    factor in ``[0, 0.5]``; random exterior points lie on spheres of radius
    2.5 to 4 times the mesh radius.  Both assume a body star-shaped about the
    origin, which holds for the built-in geometries.
    """
    import numpy as np

    spec = {} if spec is None else spec
    if isinstance(spec, list):
        pts = np.asarray(spec, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != mesh.ambient_dim:
            raise ConfigError(f"test_points must be a list of {mesh.ambient_dim}-vectors")
        return pts
    if not isinstance(spec, dict):
        raise ConfigError("test_points must be a list or an object with 'count'")
    count = _number(spec.get("count", default_count), "count", True, True)
    nodes = mesh.points
    radius = float(np.max(np.linalg.norm(nodes, axis=1)))
    if region == "interior":
        idx = rng.integers(0, len(nodes), count)
        return nodes[idx] * rng.uniform(0.0, 0.5, count)[:, None]
    d = rng.standard_normal((count, mesh.ambient_dim))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * radius * rng.uniform(2.5, 4.0, count)[:, None]


def _incident(spec, k):
    from .scattering import ElectromagneticField

    if not isinstance(spec, dict):
        raise ConfigError("incident must be an object")
    try:
        kind = spec.get("type")
        if kind == "plane-wave":
            _cvector(spec["polarization"], "polarization", 3)
            [_number(v, "direction") for v in spec["direction"]]
        elif kind == "dipole":
            _cvector(spec["moment"], "moment", 3)
            [_number(v, "position") for v in spec["position"]]
        return ElectromagneticField.from_dict(spec, k)
    except KeyError as exc:
        raise ConfigError(f"incident field is missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, complex):
        return f"{value.real!r}{value.imag:+.17g}j"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return _fmt(value.item())
    return str(value)


def write_table(path: Path, rows: list[dict]) -> None:
    """CSV with the keys of the first row as header; floats written with ``repr``."""
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for r in rows:
            writer.writerow([_fmt(r[k]) for k in keys])


def _json_default(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"not serializable: {type(value).__name__}")


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"spinbie": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__}


@dataclass
class RunResult:
    """What a driver hands back to :func:`run`."""

    results: dict
    tables: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def _planar_data(spec, curve):
    """Dirichlet data from ``{"type": "re-power" | "im-power", "power": n}``; returns (g, exact analytic)."""
    spec = spec or {"type": "re-power", "power": 3}
    if not isinstance(spec, dict):
        raise ConfigError("data must be an object")
    power = _number(spec.get("power", 3), "power", integer=True)
    if power < 0:
        raise ConfigError("power must be nonnegative")
    kind = spec.get("type", "re-power")
    if kind == "re-power":
        return lambda z: (z**power).real, lambda z: z**power
    if kind == "im-power":
        return lambda z: (z**power).imag, lambda z: -1j * z**power
    raise ConfigError(f"unknown planar data type {kind!r}")


def _drive_dirichlet2d(cfg: ExperimentConfig, out: Path, classical: bool) -> RunResult:
    import numpy as np

    from .scattering import solve_dirichlet2d_classical, solve_dirichlet2d_spin

    p = cfg.params
    curve = _geometry(p["geometry"], dims=(2,))
    g_fun, exact = _planar_data(p.get("data"), curve)
    rule = p.get("rule")
    if rule not in (None, "subtraction", "alternating", "oversampled"):
        raise ConfigError(f"unknown double layer rule {rule!r}")
    rng = np.random.default_rng(cfg.seed)
    pts = _test_points(p.get("test_points"), curve, rng, "interior")
    z = curve.nodes
    zt = pts[:, 0] + 1j * pts[:, 1]
    if classical:
        sol = solve_dirichlet2d_classical(curve, g_fun(z), rule)
        u = sol.interior(zt)
        err = np.abs(u - exact(zt).real)
        results = {"interior_error_max": float(err.max())}
        nodes = [{"x": float(a.real), "y": float(a.imag), "density": float(d)} for a, d in zip(z, sol.density)]
    else:
        sol = solve_dirichlet2d_spin(curve, g_fun(z))
        w = curve.weights
        ex = exact(z)
        # the conjugate function is fixed up to a constant
        shift = np.sum(w * (sol.trace.imag - ex.imag)) / np.sum(w)
        trace_err = np.abs(sol.trace - 1j * shift - ex)
        vals = sol.interior(zt) - 1j * shift
        err = np.abs(vals - exact(zt))
        results = {"boundary_error_max": float(trace_err.max()), "conjugate_shift": float(shift),
                   "interior_error_max": float(err.max()),
                   "interior_error_real_max": float(np.abs(vals.real - exact(zt).real).max())}
        nodes = [{"x": float(a.real), "y": float(a.imag), "u": float(t.real), "v": float(t.imag),
                  "error": float(e)} for a, t, e in zip(z, sol.trace, trace_err)]
    results["solve"] = sol.report.to_dict()
    points = [{"x": float(a.real), "y": float(a.imag), "error": float(e)} for a, e in zip(zt, err)]
    return RunResult(results, {"boundary.csv": nodes, "points.csv": points})


def _sphere_rows(pts, err):
    return [{"x": float(a[0]), "y": float(a[1]), "z": float(a[2]), "error": float(e)} for a, e in zip(pts, err)]


def _drive_pec(cfg: ExperimentConfig, out: Path) -> RunResult:
    import numpy as np

    from . import kernels as kn
    from .scattering import ElectromagneticField, grade_residual, solve_maxwell_pec

    p = cfg.params
    surface = _geometry(p["geometry"], dims=(3,))
    k = _wavenumber(p["k"])
    rng = np.random.default_rng(cfg.seed)
    exact = None
    if "manufactured_dipole" in p:
        md = p["manufactured_dipole"]
        if "incident" in p:
            raise ConfigError("give either incident or manufactured_dipole")
        try:
            src = [_number(v, "position") for v in md["position"]]
            mom = _cvector(md["moment"], "moment", 3)
        except (KeyError, TypeError) as exc:
            raise ConfigError("manufactured_dipole needs position and moment") from exc
        dip = kn.maxwell_dipole(k, src, mom)

        def negated(x):
            e, h = dip(x)
            return -e, -h

        incident = ElectromagneticField(k, negated, {"type": "negated-dipole", "position": src})
        exact = dip
    elif "incident" in p:
        incident = _incident(p["incident"], k)
    else:
        raise ConfigError("maxwell-pec needs incident or manufactured_dipole")
    pts = _test_points(p.get("test_points"), surface, rng, "exterior")
    sol = solve_maxwell_pec(surface, k, incident)
    field_vals = sol.scattered(pts)
    results = {"panels": surface.size, "grade_residual": grade_residual(field_vals), "solve": sol.report.to_dict()}
    rows = []
    if exact is not None:
        w = surface.weights[:, None]
        ex = kn.pack_maxwell(*exact(surface.centroids))
        results["trace_error"] = float(np.sqrt(np.sum(w * np.abs(sol.trace.values - ex) ** 2) / np.sum(w * np.abs(ex) ** 2)))
        exf = kn.pack_maxwell(*exact(pts))
        results["field_error"] = float(np.linalg.norm(field_vals - exf) / np.linalg.norm(exf))
        rows = _sphere_rows(pts, np.linalg.norm(field_vals - exf, axis=1))
    else:
        rows = _sphere_rows(pts, np.full(len(pts), np.nan))
        for r, f in zip(rows, field_vals):
            r.pop("error")
            r["field_norm"] = float(np.linalg.norm(f))
    return RunResult(results, {"points.csv": rows})


def _drive_dirac_generic(cfg: ExperimentConfig, out: Path) -> RunResult:
    import numpy as np

    from . import kernels as kn
    from .operators import assemble_reflection, projections
    from .scattering import solve_dirac_generic

    p = cfg.params
    # the planar interior problem has a kernel; it is served by dirichlet2d
    mesh = _geometry(p["geometry"], dims=(3,))
    n = 3
    k = _wavenumber(p.get("k", 0.0))
    side, part = p["side"], p["part"]
    if side not in ("interior", "exterior") or part not in ("tangential", "normal"):
        raise ConfigError("side must be interior/exterior and part tangential/normal")
    if side == "exterior" and k == 0:
        raise ConfigError("exterior problems need k != 0")
    source = np.array([_number(v, "source") for v in p["source"]])
    if source.shape != (n,):
        raise ConfigError(f"source must have {n} coordinates")
    moment = np.array(_cvector(p["moment"], "moment", 1 << n))
    inside = bool(mesh.region_of(source[None])[0] > 0)
    if inside == (side == "interior"):
        raise ConfigError("the source must lie outside the solution domain")
    exact = kn.dipole_field(k, source, moment)
    f = exact(mesh.points)
    np_, nm_ = projections(assemble_reflection(mesh, "N"))
    g = (np_ if part == "tangential" else nm_).apply(f)
    sol = solve_dirac_generic(mesh, k, side, part, g)
    w = mesh.weights[:, None]
    err = np.sqrt(np.sum(w * np.abs(sol.trace.values - f) ** 2) / np.sum(w * np.abs(f) ** 2))
    results = {"nodes": mesh.size, "trace_error": float(err), "solve": sol.report.to_dict()}
    rng = np.random.default_rng(cfg.seed)
    pts = _test_points(p.get("test_points"), mesh, rng, side)
    vals = sol.field(pts)
    exf = exact(pts)
    results["field_error"] = float(np.linalg.norm(vals - exf) / np.linalg.norm(exf))
    rows = [dict(zip("xyz", map(float, a)), error=float(e)) for a, e in zip(pts, np.linalg.norm(vals - exf, axis=1))]
    return RunResult(results, {"points.csv": rows})


def _drive_transmission(cfg: ExperimentConfig, out: Path) -> RunResult:
    import numpy as np

    from .scattering import MaterialParams, TransmissionConfig, solve_transmission

    p = cfg.params
    if not isinstance(p["bodies"], list) or not p["bodies"]:
        raise ConfigError("bodies must be a nonempty list of geometries")
    surfaces = [_geometry(b, dims=(3,)) for b in p["bodies"]]
    try:
        materials = [MaterialParams.from_dict(m) for m in p["materials"]]
        tcfg = TransmissionConfig(surfaces, materials)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid transmission setup: {exc}") from exc
    incident = _incident(p["incident"], materials[0].k)
    rng = np.random.default_rng(cfg.seed)
    pts = _test_points(p.get("test_points"), surfaces[0], rng, "exterior")
    sol = solve_transmission(tcfg, incident=incident)
    refl = sol.field(0, pts)
    inc = incident.multivector(pts)
    results = {
        "panels": sol.sigma.size,
        "jump_residual": sol.jump_residual(),
        "reflected_over_incident": float(np.linalg.norm(refl) / np.linalg.norm(inc)),
        "wave_numbers": [m.k for m in materials],
        "solve": sol.report.to_dict(),
    }
    rows = [dict(zip("xyz", map(float, a)), reflected=float(np.linalg.norm(r)), incident=float(np.linalg.norm(i)))
            for a, r, i in zip(pts, refl, inc)]
    return RunResult(results, {"points.csv": rows})


def _thetas(value) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError("thetas must be a nonempty list")
    import math

    out = []
    for i, t in enumerate(value):
        # angles may be given as fractions of pi: {"pi_over": 8}
        if isinstance(t, dict) and "pi_over" in t:
            t = math.pi / _number(t["pi_over"], f"thetas[{i}].pi_over", True)
        t = _number(t, f"thetas[{i}]", True)
        if not 0 < t <= math.pi:
            raise ConfigError("angles must lie in (0, pi]")
        out.append(t)
    return out


def _sweep_result(report, name: str) -> RunResult:
    return RunResult({"summary": report.summary}, {name: report.rows})


def _drive_mellin(cfg: ExperimentConfig, out: Path) -> RunResult:
    from .mellin import default_xi_grid, theta_sweep

    p = cfg.params
    thetas = _thetas(p["thetas"])
    if len(thetas) < 3:
        raise ConfigError("a power-law fit needs at least three angles")
    grid = default_xi_grid(_number(p.get("xi_max", 40.0), "xi_max", True),
                           _number(p.get("xi_per_sign", 2001), "xi_per_sign", True, True),
                           _number(p.get("xi_uniform", 401), "xi_uniform", True, True))
    return _sweep_result(theta_sweep(thetas, grid), "mellin.csv")


def _drive_corner(cfg: ExperimentConfig, out: Path) -> RunResult:
    from .scattering import corner_sweep

    p = cfg.params
    thetas = _thetas(p["thetas"])
    nodes = _number(p.get("nodes", 256), "nodes", True, True)
    q = _number(p.get("grading_q", 3.0), "grading_q", True)
    return _sweep_result(corner_sweep(thetas, nodes, q), "corner.csv")


def _drive_resonance(cfg: ExperimentConfig, out: Path) -> RunResult:
    import numpy as np

    from .scattering import resonance_sweep

    p = cfg.params
    surface = _geometry(p["geometry"], dims=(3,))
    k0, k1 = _number(p["k_min"], "k_min", True), _number(p["k_max"], "k_max", True)
    steps = _number(p["steps"], "steps", True, True)
    if k1 < k0:
        raise ConfigError("k_max must not be smaller than k_min")
    return _sweep_result(resonance_sweep(surface, np.linspace(k0, k1, steps)), "resonance.csv")


def _drive_calderon(cfg: ExperimentConfig, out: Path) -> RunResult:
    from .operators import assemble_E, assemble_ES
    from .solvers import calderon_residual, skew_residual

    p = cfg.params
    mesh = _geometry(p["geometry"], dims=(2, 3))
    ks = p.get("k", [0.0])
    ks = ks if isinstance(ks, list) else [ks]
    ks = [_wavenumber(k) for k in ks]
    if mesh.ambient_dim == 2 and any(k != 0 for k in ks):
        raise ConfigError("planar operators are static (k = 0)")
    rows = []
    for k in ks:
        t0 = time.perf_counter()
        E = assemble_E(mesh, k)
        row = {"k_re": k.real, "k_im": k.imag, "nodes": mesh.size, "calderon_residual": calderon_residual(E)}
        if k == 0:
            row["skew_residual"] = skew_residual(assemble_ES(mesh, 0.0))
        else:
            row["skew_residual"] = float("nan")
        rows.append(row)
        logger.info("k=%s |E^2-I|=%.3e (%.1fs)", k, row["calderon_residual"], time.perf_counter() - t0)
    return RunResult({"rows": rows}, {"calderon.csv": rows})


_OPERATORS = ("E", "ES", "K", "Kstar", "N", "S", "T", "M")


def _drive_dump(cfg: ExperimentConfig, out: Path) -> RunResult:
    from . import operators as ops

    p = cfg.params
    name = p["operator"]
    if name not in _OPERATORS:
        raise ConfigError(f"operator must be one of {', '.join(_OPERATORS)}")
    mesh = _geometry(p["geometry"], dims=(2, 3))
    k = _wavenumber(p.get("k", 0.0))
    planar = mesh.ambient_dim == 2
    if planar and k != 0:
        raise ConfigError("planar operators are static (k = 0)")
    if name in ("K", "Kstar") and not planar:
        raise ConfigError("the double layer operators are planar only")
    if name == "M" and planar:
        raise ConfigError("the Maxwell multiplier needs a surface")
    if name == "E":
        op = ops.assemble_E(mesh, k)
    elif name == "ES":
        op = ops.assemble_ES(mesh, k)
    elif name == "K":
        op = ops.assemble_K_2d(mesh)
    elif name == "Kstar":
        op = ops.assemble_Kstar_2d(mesh)
    elif name == "M":
        op = ops.assemble_M(mesh)
    else:
        op = ops.assemble_reflection(mesh, name)
    path = out / f"operator_{name}.bin"
    header = ops.dump_operator(op, path)
    return RunResult({"header": header}, {}, [path.name])


_DRIVERS = {
    "dirichlet2d": lambda c, o: _drive_dirichlet2d(c, o, classical=False),
    "dirichlet2d-classical": lambda c, o: _drive_dirichlet2d(c, o, classical=True),
    "maxwell-pec": _drive_pec,
    "dirac-generic": _drive_dirac_generic,
    "transmission": _drive_transmission,
    "mellin-sweep": _drive_mellin,
    "corner-sweep": _drive_corner,
    "resonance-sweep": _drive_resonance,
    "calderon-check": _drive_calderon,
    "operator-dump": _drive_dump,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def _numerical_errors() -> tuple:
    import numpy as np

    from .operators import DenseCapError
    from .scattering import NearBoundaryError

    return (np.linalg.LinAlgError, DenseCapError, NearBoundaryError, FloatingPointError, ZeroDivisionError)


def _prepare_out(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}") from exc
    return out


def run(config: ExperimentConfig, out) -> int:
    """Run one experiment and write its artifacts; returns the exit code."""
    out = _prepare_out(out)
    report = {"experiment": config.experiment, "config": config.raw, "status": "ok"}
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        report["versions"] = _versions()
        result = _DRIVERS[config.experiment](config, out)
        report["results"] = result.results
        for name, rows in result.tables.items():
            write_table(out / name, rows)
        report["artifacts"] = sorted(list(result.tables) + result.files)
    except ConfigError:
        raise
    except _numerical_errors() as exc:
        logger.error("numerical failure: %s", exc)
        report["status"] = "numerical-failure"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("sigma_min", "sigma_max"):
            if hasattr(exc, attr):
                report["error"][attr] = getattr(exc, attr)
        code = EXIT_NUMERICAL
    report["elapsed_seconds"] = time.perf_counter() - t0
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_json_default))
    return code


def _set_threads(n: int | None) -> None:
    # must happen before numpy loads its BLAS
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinbie", description="Spin boundary integral equation experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
        sp.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    _set_threads(args.threads)
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        config = load_config(args.config, args.experiment)
        code = run(config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_OK:
        print(f"{args.experiment}: results in {out}")
    else:
        print(f"{args.experiment}: numerical failure, see {Path(out) / 'report.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
