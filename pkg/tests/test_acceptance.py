"""Acceptance suite: one PASS/FAIL line per criterion at the contract tolerances.

Lines are printed as each test finishes and collected again in the terminal
summary.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest

from spinbie import clifford as cl
from spinbie import kernels as kn
from spinbie import mellin as me
from spinbie import operators as ops
from spinbie import scattering as sc
from spinbie.geometry import make_circle, make_ellipse, make_icosphere
from spinbie.solvers import calderon_residual, norm_inverse, reproduction_error, restricted_map, skew_residual

pytestmark = pytest.mark.slow


# ---------------------------------------------------------------------------
# 1. algebra exactness
# ---------------------------------------------------------------------------

def _blade_product(a: tuple, b: tuple) -> tuple[int, tuple]:
    """Sign and blade of e_a e_b for index tuples (independent reference)."""
    seq = list(a) + list(b)
    sign = 1
    # bubble sort, counting transpositions
    for i in range(len(seq)):
        for j in range(len(seq) - 1 - i):
            if seq[j] > seq[j + 1]:
                seq[j], seq[j + 1] = seq[j + 1], seq[j]
                sign = -sign
    out = []
    for x in seq:
        if out and out[-1] == x:
            out.pop()
        else:
            out.append(x)
    return sign, tuple(out)


def _blades(n: int) -> list[tuple]:
    names = cl.blade_names(n)
    return [() if s == "1" else tuple(int(c) for c in s[1:]) for s in names]


def _reference_tables(n: int):
    blades = _blades(n)
    pos = {b: i for i, b in enumerate(blades)}
    d = len(blades)
    geo, ext, lc = (np.zeros((d, d, d), dtype=int) for _ in range(3))
    for i, a in enumerate(blades):
        for j, b in enumerate(blades):
            sign, c = _blade_product(a, b)
            geo[i, j, pos[c]] = sign
            if not set(a) & set(b):
                ext[i, j, pos[c]] = sign
            if set(a) <= set(b):
                # contraction is the adjoint of the wedge: reverse the left blade
                rsign, rc = _blade_product(tuple(reversed(a)), b)
                lc[i, j, pos[rc]] = rsign
    return geo, ext, lc


def test_criterion_01_algebra_exactness(acceptance):
    t0 = time.perf_counter()
    mismatches = 0
    for n in (2, 3):
        geo, ext, lc = _reference_tables(n)
        eye = np.eye(1 << n)
        for i, j in itertools.product(range(1 << n), repeat=2):
            u, v = eye[i], eye[j]
            mismatches += not np.array_equal(cl.clifford_mul(u, v), geo[i, j])
            mismatches += not np.array_equal(cl.wedge(u, v), ext[i, j])
            mismatches += not np.array_equal(cl.lcontract(u, v), lc[i, j])
        for i in range(1, n + 1):
            for j in range(1 << n):
                wed, con = cl.riesz_check(eye[i], eye[j])
                mismatches += not np.array_equal(wed, ext[i, j])
                mismatches += not np.array_equal(con, lc[i, j])
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (2, 3):
        d = 1 << n
        a = cl.vector(rng.standard_normal((1000, n)) + 1j * rng.standard_normal((1000, n)))
        w = rng.standard_normal((1000, d)) + 1j * rng.standard_normal((1000, d))
        wed, con = cl.riesz_check(a, w)
        worst = max(worst, np.abs(wed - cl.wedge(a, w)).max(), np.abs(con - cl.lcontract(a, w)).max(),
                    np.abs(cl.clifford_mul(a, w) - wed - con).max())
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and worst < 1e-13 and dt < 1.0
    acceptance(1, "algebra exactness", ok,
               f"basis mismatches {mismatches} (need 0), random max error {worst:.1e} (need < 1e-13)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 2. projection identities
# ---------------------------------------------------------------------------

def test_criterion_02_projection_identities(acceptance):
    t0 = time.perf_counter()
    c = make_circle(1.0, 64)
    mats = {w: ops.assemble_reflection(c, w).matrix() for w in "NST"}
    mats["E"] = ops.assemble_E(c).matrix()
    eye = np.eye(mats["E"].shape[0])
    worst = 0.0
    for (na, a), (nb, b) in itertools.product(mats.items(), repeat=2):
        ap, am, bp, bm = (eye + a) / 2, (eye - a) / 2, (eye + b) / 2, (eye - b) / 2
        ab = a @ b
        cos = 0.5 * (ab + b @ a)
        worst = max(worst, np.abs((eye + ab) / 2 - (ap @ bp + am @ bm)).max())
        for s in (1.0, -1.0):
            lhs = (eye + s * ab) @ a @ (eye + s * ab) @ a
            worst = max(worst, np.abs(lhs - 2 * (eye + s * cos)).max())
    dt = time.perf_counter() - t0
    ok = worst < 1e-12 and dt < 10
    acceptance(2, "projection identities", ok, f"max entry deviation {worst:.1e} (need < 1e-12)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 3. Calderon reproduction
# ---------------------------------------------------------------------------

def test_criterion_03_calderon(acceptance):
    t0 = time.perf_counter()
    circle = calderon_residual(ops.assemble_E(make_circle(1.0, 256)))
    parts = [f"circle {circle:.1e} (need < 1e-8)"]
    ok = circle < 1e-8
    for k in (0.0, 2.0):
        res, smooth = [], []
        for s in (1, 2):
            surf = make_icosphere(1.0, s)
            E = ops.assemble_E(surf, k)
            res.append(calderon_residual(E))
            inside = kn.dipole_field(k, [0.1, 0.2, -0.1], np.eye(8)[1] + 0.5j * np.eye(8)[5])(surf.centroids)
            smooth.append(reproduction_error(E, inside, -1.0))
        factor = res[0] / res[1]
        ok &= factor >= 1.6
        parts.append(f"k={k:g} icosphere {res[0]:.4f}->{res[1]:.4f} factor {factor:.3f} (need >= 1.6), "
                     f"smooth trace error {smooth[0]:.3f}->{smooth[1]:.3f}")
    dt = time.perf_counter() - t0
    ok &= dt < 180
    acceptance(3, "Calderon reproduction", ok, "; ".join(parts), dt)
    assert ok


# ---------------------------------------------------------------------------
# 4. skew-adjointness
# ---------------------------------------------------------------------------

def test_criterion_04_skew_adjointness(acceptance):
    t0 = time.perf_counter()
    circle = skew_residual(ops.assemble_ES(make_circle(1.0, 256)))
    sphere = skew_residual(ops.assemble_ES(make_icosphere(1.0, 3), 0.0))
    dt = time.perf_counter() - t0
    ok = circle < 1e-8 and sphere < 0.1 and dt < 120
    acceptance(4, "skew-adjointness of ES", ok,
               f"circle {circle:.1e} (need < 1e-8), icosphere s=3 {sphere:.4f} (need < 0.1)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 5. norm bound
# ---------------------------------------------------------------------------

def _hardy_inverse_norm(mesh, k=0.0) -> float:
    ep, _ = ops.projections(ops.assemble_E(mesh, k))
    _, sm = ops.projections(ops.assemble_reflection(mesh, "S"))
    return norm_inverse(restricted_map(ep, sm))


def test_criterion_05_norm_bound(acceptance):
    t0 = time.perf_counter()
    circle = _hardy_inverse_norm(make_circle(1.0, 256))
    surf = make_icosphere(1.0, 2)
    sphere = {k: _hardy_inverse_norm(surf, k) for k in (0.0, 2.0, 3.14)}
    dt = time.perf_counter() - t0
    ok = circle <= 2.1 and max(sphere.values()) <= 2.5 and dt < 180
    detail = f"circle {circle:.4f} (need <= 2.1), icosphere s=2 " + ", ".join(
        f"k={k:g}: {v:.4f}" for k, v in sphere.items()) + " (need <= 2.5)"
    acceptance(5, "inverse norm bound", ok, detail, dt)
    assert ok


# ---------------------------------------------------------------------------
# 6. planar spin Dirichlet problem
# ---------------------------------------------------------------------------

def test_criterion_06_planar_dirichlet(acceptance):
    t0 = time.perf_counter()
    curve = make_ellipse(2.0, 1.0, 256)
    g = (curve.nodes ** 3).real
    spin = sc.solve_dirichlet2d_spin(curve, g)
    classical = sc.solve_dirichlet2d_classical(curve, g)
    rng = np.random.default_rng(0)
    z = 1.6 * rng.uniform(-1, 1, 40) + 0.8j * rng.uniform(-1, 1, 40)
    z = z[(z.real / 2) ** 2 + z.imag ** 2 < 0.64]
    err = np.abs(spin.interior(z).real - (z ** 3).real).max()
    agree = np.abs(spin.interior(z).real - classical.interior(z)).max()
    dt = time.perf_counter() - t0
    ok = err < 1e-8 and agree < 1e-7 and dt < 30
    acceptance(6, "planar spin Dirichlet", ok,
               f"interior error {err:.1e} (need < 1e-8), spin vs classical {agree:.1e} (need < 1e-7)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 7. Mellin laws
# ---------------------------------------------------------------------------

def test_criterion_07_mellin(acceptance):
    t0 = time.perf_counter()
    rep = me.theta_sweep([0.4, 0.2, 0.1, 0.05])
    sk = rep.summary["slope_inv_IplusK"]
    sen = rep.summary["slope_inv_IplusEN"]
    rng = np.random.default_rng(7)
    worst = 0.0
    for theta, xi in zip(rng.uniform(0.01, np.pi - 0.01, 100), rng.uniform(-10, 10, 100)):
        a = me.realify_complex(me.symbol_IplusEN(theta, xi))
        worst = max(worst, np.abs(a @ me.symbol_IplusEN_inverse(theta, xi) - np.eye(8)).max())
    dt = time.perf_counter() - t0
    ok = abs(sk - 2.0) <= 0.1 and abs(sen - 1.0) <= 0.1 and worst < 1e-10 and dt < 60
    acceptance(7, "Mellin laws", ok,
               f"exponent (I+K) {sk:.4f} (need 2 +- 0.1), exponent (I+EN) {sen:.4f} (need 1 +- 0.1), "
               f"multiply-back {worst:.1e} (need < 1e-10)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 8. corner trend
# ---------------------------------------------------------------------------

def test_criterion_08_corner_trend(acceptance):
    t0 = time.perf_counter()
    rep = sc.corner_sweep([np.pi / 2, np.pi / 4, np.pi / 8, np.pi / 16])
    ratios = rep.column("ratio")
    monotone = rep.summary["monotone"]
    growth = rep.summary["growth"]
    dt = time.perf_counter() - t0
    ok = monotone and growth >= 2.0 and dt < 300
    acceptance(8, "corner conditioning trend", ok,
               "ratios " + ", ".join(f"{r:.3f}" for r in ratios)
               + f", monotone {monotone} (need True), growth {growth:.3f} (need >= 2)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 9. Maxwell PEC
# ---------------------------------------------------------------------------

def test_criterion_09_pec(acceptance):
    t0 = time.perf_counter()
    k = 2.0
    dip = kn.maxwell_dipole(k, [0.1, 0.2, -0.1], [0.3, -0.5, 0.8 + 0.2j])

    def negated(x):
        e, h = dip(x)
        return -e, -h

    incident = sc.ElectromagneticField(k, negated)
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((40, 3))
    pts *= (rng.uniform(2.5, 4.0, 40) / np.linalg.norm(pts, axis=1))[:, None]
    trace_err, grade = [], []
    for s in (2, 3):
        surf = make_icosphere(1.0, s)
        sol = sc.solve_maxwell_pec(surf, k, incident)
        exact = kn.pack_maxwell(*dip(surf.centroids))
        w = surf.weights[:, None]
        trace_err.append(float(np.sqrt(np.sum(w * np.abs(sol.trace.values - exact) ** 2) / np.sum(w * np.abs(exact) ** 2))))
        grade.append(sc.grade_residual(sol.scattered(pts)))
        del sol
    dt = time.perf_counter() - t0
    ft, fg = trace_err[0] / trace_err[1], grade[0] / grade[1]
    ok = trace_err[1] <= 5e-2 and ft >= 1.5 and fg >= 1.5 and dt < 600
    acceptance(9, "Maxwell PEC", ok,
               f"trace error {trace_err[0]:.4f}->{trace_err[1]:.4f} (need <= 0.05, factor {ft:.2f} >= 1.5), "
               f"grade residual {grade[0]:.4f}->{grade[1]:.4f} (factor {fg:.2f} >= 1.5)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 10. resonance sweep
# ---------------------------------------------------------------------------

def test_criterion_10_resonances(acceptance):
    t0 = time.perf_counter()
    rep = sc.resonance_sweep(make_icosphere(1.0, 2), np.linspace(2.0, 4.5, 26))
    spin = rep.summary["spin_variation"]
    nans = rep.summary["nansatz_variation"]
    dt = time.perf_counter() - t0
    ok = spin < 10 and nans > 10 and dt < 900
    acceptance(10, "resonance sweep", ok,
               f"spin max/min {spin:.3f} (need < 10), N-ansatz max/min {nans:.2f} (need > 10)", dt)
    assert ok


# ---------------------------------------------------------------------------
# 11. transmission
# ---------------------------------------------------------------------------

def test_criterion_11_transmission(acceptance):
    t0 = time.perf_counter()
    omega = 2.0
    vacuum = sc.MaterialParams(1.0, 1.0, 0.0, omega)
    surf = make_icosphere(1.0, 2)
    incident = sc.ElectromagneticField.plane_wave(vacuum.k, [0, 0, 1], [1, 0, 0])
    sol = sc.solve_transmission(sc.TransmissionConfig([surf], [vacuum, vacuum]), incident=incident)
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((30, 3))
    pts *= (3.0 / np.linalg.norm(pts, axis=1))[:, None]
    reflected = np.linalg.norm(sol.field(0, pts)) / np.linalg.norm(incident.multivector(pts))

    mats = [vacuum, sc.MaterialParams(2.5, 1.2, 0.3, omega)]
    outer = kn.maxwell_dipole(mats[0].k, [0.1, -0.2, 0.15], [0.2, 0.7, -0.4])
    inner = kn.maxwell_dipole(mats[1].k, [1.8, 0.4, -0.9], [0.5, -0.3, 0.6j])

    def data(points, normals):
        f0 = kn.pack_maxwell(*outer(points))
        f1 = kn.pack_maxwell(*inner(points))
        return -(np.einsum("pab,pb->pa", sc.material_map(-normals, mats[0]), f0)
                 + np.einsum("pab,pb->pa", sc.material_map(normals, mats[1]), f1))

    jumps = []
    for s in (1, 2):
        cfg = sc.TransmissionConfig([make_icosphere(1.0, s)], mats)
        jumps.append(sc.solve_transmission(cfg, data=data).jump_residual(data))
    factor = jumps[0] / jumps[1]
    dt = time.perf_counter() - t0
    ok = reflected < 1e-2 and factor >= 1.5 and dt < 900
    acceptance(11, "transmission", ok,
               f"no-contrast reflected/incident {reflected:.2e} (need < 1e-2), jump residual "
               f"{jumps[0]:.4f}->{jumps[1]:.4f} factor {factor:.2f} (need >= 1.5)", dt)
    assert ok
