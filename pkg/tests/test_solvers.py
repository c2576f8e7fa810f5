import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinbie import operators as ops
from spinbie import solvers as sv


def _diag_operator(mesh, values):
    blocks = np.zeros((mesh.size, 4, 4), dtype=complex)
    for b in range(4):
        blocks[:, b, b] = values
    return ops.pointwise(mesh, blocks)


def test_solve_dense_identity(circle64, rng):
    eye = ops.identity(circle64)
    b = rng.standard_normal((64, 4)) + 1j * rng.standard_normal((64, 4))
    x, report = sv.solve_dense(eye, b)
    assert np.allclose(x, b)
    assert report.condition_estimate == pytest.approx(1.0)
    assert report.residual_norm < 1e-15


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
def test_solve_dense_random_complex(n, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n)) + 3 * n ** 0.5 * np.eye(n)
    b = r.standard_normal(n) + 1j * r.standard_normal(n)
    x, report = sv.solve_dense(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-11 * np.linalg.norm(b)
    assert report.size == n


def test_solve_dense_real_matrix_complex_rhs(rng):
    a = rng.standard_normal((10, 10)) + 5 * np.eye(10)
    b = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    x, _ = sv.solve_dense(a, b)
    assert np.allclose(a @ x, b)


def test_solve_dense_singular_raises():
    a = np.diag([1.0, 1.0, 0.0])
    with pytest.raises(sv.SingularSystemError) as info:
        sv.solve_dense(a, np.ones(3))
    assert info.value.sigma_min == 0.0


def test_solve_dense_shape_mismatch():
    with pytest.raises(ValueError):
        sv.solve_dense(np.eye(3), np.ones(4))


def test_condition_svd_diagonal(circle64):
    vals = np.where(np.arange(64) % 2 == 0, 2.0, 1.0)
    rep = sv.condition_svd(_diag_operator(circle64, vals))
    assert rep.kappa == pytest.approx(2.0)
    assert rep.sigma_max == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sv.condition_svd(_diag_operator(circle64, vals), deflate=5)


def test_condition_svd_deflation(circle64):
    vals = np.ones(64)
    vals[0] = 1e-3
    rep = sv.condition_svd(_diag_operator(circle64, vals), deflate=4)
    assert rep.kappa == pytest.approx(1e3)
    assert rep.kappa_deflated == pytest.approx(1.0)


@pytest.mark.parametrize("which", ["N", "S", "T"])
def test_reflections_are_unitary(circle64, sphere1, which):
    for mesh in (circle64, sphere1):
        a = sv.weighted_matrix(ops.assemble_reflection(mesh, which))
        assert np.abs(a.conj().T @ a - np.eye(a.shape[0])).max() < 1e-13
        assert sv.operator_norm(ops.assemble_reflection(mesh, which)) == pytest.approx(1.0)


def test_restricted_map_identity_has_unit_singular_values(circle64):
    sp, sm = ops.projections(ops.assemble_reflection(circle64, "S"))
    rmap = sv.restricted_map(ops.identity(circle64), sm, sm)
    assert rmap.matrix.shape == (128, 128)
    assert np.allclose(np.linalg.svd(rmap.matrix, compute_uv=False), 1.0)
    assert sv.norm_inverse(rmap) == pytest.approx(1.0)
    real = rmap.real_matrix()
    assert real.shape == (256, 256)


def test_restricted_map_rejects_non_projector(circle64):
    with pytest.raises(ValueError):
        sv.restricted_map(ops.identity(circle64), ops.assemble_reflection(circle64, "S"))


def test_norm_inverse_detects_non_injective(circle64):
    sp, sm = ops.projections(ops.assemble_reflection(circle64, "S"))
    # S+ restricted to range(S-) is zero
    with pytest.raises(sv.SingularSystemError):
        sv.norm_inverse(sv.restricted_map(sp, sm, sp))


def test_hardy_restriction_bound_on_circle():
    from spinbie.geometry import make_circle

    c = make_circle(1.0, 128)
    ep, _ = ops.projections(ops.assemble_E(c))
    _, sm = ops.projections(ops.assemble_reflection(c, "S"))
    assert sv.norm_inverse(sv.restricted_map(ep, sm)) <= 2.1


def test_solve_minnorm_with_known_kernel(rng):
    n = 32
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.linspace(1.0, 2.0, n)
    s[-1] = 0.0
    a = (q * s) @ q.T
    b = a @ rng.standard_normal(n)

    from spinbie.geometry import make_circle

    mesh = make_circle(1.0, 8)
    op = ops.RealLinearOperator(mesh, a.astype(complex), "dense", "random", (0, 1, 2, 3), (0, 1, 2, 3))
    x, report = sv.solve_minnorm(op, b, deflate=1)
    w = np.repeat(mesh.weights, 4)
    assert np.linalg.norm(a @ x - b) < 1e-10 * np.linalg.norm(b)
    # minimum norm: orthogonal to the kernel in the weighted inner product
    assert abs(np.sum(w * x * q[:, -1])) < 1e-10
    assert report.deflated == 1
    with pytest.raises(ValueError):
        sv.solve_minnorm(op, b, deflate=7)


def test_calderon_and_skew_on_circle():
    from spinbie.geometry import make_circle

    c = make_circle(1.0, 128)
    assert sv.calderon_residual(ops.assemble_E(c)) < 1e-10
    assert sv.skew_residual(ops.assemble_ES(c)) < 1e-10


def test_reproduction_error_signs(circle64):
    from spinbie import kernels as kn

    E = ops.assemble_E(circle64)
    inside = kn.dipole_field(0.0, [0.1, -0.2], np.eye(4)[1])(circle64.points)
    outside = kn.dipole_field(0.0, [2.0, 0.5], np.eye(4)[2])(circle64.points)
    assert sv.reproduction_error(E, inside, -1.0) < 1e-10
    assert sv.reproduction_error(E, outside, 1.0) < 1e-8


def test_sweep_report_csv_round_trip(tmp_path):
    rep = sv.SweepReport("x", [{"x": 0.1, "y": 1.0 / 3.0}, {"x": 0.2, "y": 2}])
    path = tmp_path / "s.csv"
    rep.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0
    assert np.allclose(rep.column("x"), [0.1, 0.2])
    rep.write_json(tmp_path / "s.json")
    with pytest.raises(ValueError):
        sv.SweepReport("x").write_csv(path)
