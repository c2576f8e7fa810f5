import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbie import clifford as cl
from spinbie import kernels as kn
from spinbie import operators as ops
from spinbie.geometry import make_circle, make_corner_curve, make_ellipse, make_icosphere


def even_values(curve, analytic):
    """Grid function ``u + e12 v`` for an analytic ``u + i v``."""
    f = np.zeros((curve.size, 4), dtype=complex)
    f[:, 0] = analytic.real
    f[:, 3] = analytic.imag
    return f


def test_cauchy_on_circle_reproduces_hardy_functions(circle64):
    E = ops.assemble_E_2d(circle64)
    z = circle64.nodes
    one = even_values(circle64, np.ones(64))
    assert np.abs(E.apply(one) - one).max() < 1e-10
    inv = even_values(circle64, 1 / z)
    assert np.abs(E.apply(inv) + inv).max() < 1e-10
    # 1/z equals conj(z) on the unit circle: same oracle, other representation
    assert np.allclose(inv, even_values(circle64, np.conj(z)))


def test_cauchy_on_ellipse_spectral_accuracy():
    e = make_ellipse(2.0, 1.0, 256)
    E = ops.assemble_E_2d(e)
    z = e.nodes
    f = even_values(e, z**3)
    assert np.abs(E.apply(f) - f).max() < 1e-10
    g = even_values(e, 1 / (z - 0.3))
    assert np.abs(E.apply(g) + g).max() < 1e-9


def test_reflections(circle64, sphere1):
    for mesh in (circle64, sphere1):
        d = 1 << mesh.ambient_dim
        N, S, T = (ops.assemble_reflection(mesh, w) for w in "NST")
        eye = np.eye(mesh.size * d)
        for R in (N, S, T):
            m = R.matrix()
            assert np.abs(m @ m - eye).max() < 1e-14
        assert np.abs((S @ T + T @ S).matrix()).max() < 1e-14
        assert np.linalg.norm((N @ T + T @ N).matrix(), 2) > 0.5


def test_maxwell_multiplier_formula():
    s = make_icosphere(1.0, 0)
    M = ops.assemble_M(s)
    nu = s.normals[0]
    blocks = M.data[0]
    # the product of the three projections is half of alpha + a + *b + *beta -> alpha + nu ^ a + (nu, b) *nu
    a = np.array([0.3, -0.2, 0.5])
    out = 2 * blocks @ cl.vector(a)
    assert np.allclose(out, cl.wedge(cl.vector(nu), cl.vector(a)))
    assert np.allclose(blocks @ np.eye(8)[7], 0)
    P = [ops.projections(ops.assemble_reflection(s, w))[0] for w in "TSN"]
    assert np.allclose(M.matrix(), (P[0] @ P[1] @ P[2]).matrix())


def test_maxwell_multiplier_with_e3_normal():
    nu = cl.vector(np.array([0.0, 0.0, 1.0])).real
    T = np.diag((-1.0) ** cl.tables(3).grades)
    I8 = np.eye(8)
    S = cl.left_matrix(nu)
    N = cl.left_matrix(nu) @ cl.right_matrix(nu) @ T
    M = (I8 + T) @ (I8 + S) @ (I8 + N) / 8
    e1 = np.eye(8)[1]
    assert np.allclose(2 * M @ e1, -np.eye(8)[5])  # e3 ^ e1 = -e13
    assert np.allclose(2 * M @ np.eye(8)[0], np.eye(8)[0])
    b = np.eye(8)[4] + 2 * np.eye(8)[6]  # *b for b = e3 + 2 e1
    assert np.allclose(2 * M @ b, np.eye(8)[4])  # (nu, b) *nu = e12


def test_projection_identities_exact(circle64):
    E = ops.assemble_E_2d(circle64)
    mats = {w: ops.assemble_reflection(circle64, w) for w in "NST"}
    mats["E"] = E
    eye = np.eye(64 * 4)
    for a_name in "NST":
        A = mats[a_name].matrix()
        for b_name in "NSTE":
            B = mats[b_name].matrix()
            ap, am = (eye + A) / 2, (eye - A) / 2
            bp, bm = (eye + B) / 2, (eye - B) / 2
            assert np.abs((eye + A @ B) / 2 - (ap @ bp + am @ bm)).max() < 1e-13
            assert np.abs((eye - A @ B) / 2 - (ap @ bm + am @ bp)).max() < 1e-13


def test_hardy_projection_is_idempotent(circle64):
    Ep, _ = ops.projections(ops.assemble_E_2d(circle64))
    m = Ep.matrix()
    assert np.abs(m @ m - m).max() < 1e-9


def test_kernel_collapse(circle64, sphere1):
    for mesh, k in ((circle64, 0.0), (sphere1, 1.5)):
        ES = (ops.assemble_E(mesh, k) @ ops.assemble_reflection(mesh, "S")).matrix()
        direct = ops.assemble_ES(mesh, k).matrix()
        assert np.abs(ES - direct).max() < 1e-13 * max(1.0, np.abs(direct).max())


def test_double_layer_and_adjoint(circle64, ellipse128):
    for curve in (circle64, ellipse128):
        K = ops.assemble_K_2d(curve)
        ones = np.ones((curve.size, 1))
        assert np.abs(K.apply(ones) - ones).max() < 1e-10
        Ks = ops.assemble_Kstar_2d(curve)
        w = curve.weights
        assert np.allclose(Ks.matrix(), (K.matrix().T * w[None, :]) / w[:, None], atol=0)


def test_normal_subspace_embedding_of_adjoint_double_layer(ellipse128):
    # N- E (nu f) = nu (-K* f) for scalar f
    E = ops.assemble_E_2d(ellipse128)
    Nm = ops.projections(ops.assemble_reflection(ellipse128, "N"))[1]
    Ks = ops.assemble_Kstar_2d(ellipse128, rule="subtraction").matrix().real
    f = np.cos(ellipse128.params) + 0.3 * np.sin(3 * ellipse128.params)
    nu = cl.vector(np.column_stack([ellipse128.normal.real, ellipse128.normal.imag]))
    lhs = Nm.apply(E.apply(nu * f[:, None]))
    rhs = -nu * (Ks @ f)[:, None]
    assert np.abs(lhs - rhs).max() < 1e-6


def test_double_layer_rules_on_corner_curve():
    c = make_corner_curve(np.pi / 2, 128)
    for rule in ("oversampled", "subtraction"):
        K = ops.assemble_K_2d(c, rule)
        assert np.abs(K.apply(np.ones((128, 1))) - 1).max() < 1e-4


def test_trig_interpolation_is_exact_on_band_limited_data():
    m, factor = 16, 4
    coarse = 2 * np.pi * (np.arange(m) + 0.5) / m
    fine = 2 * np.pi * (np.arange(m * factor) + 0.5) / (m * factor)
    P = ops.trig_interpolation(m, factor)
    f = lambda t: np.cos(3 * t) + 0.5 * np.sin(5 * t) + 0.2
    assert np.abs(P @ f(coarse) - f(fine)).max() < 1e-12


def test_discrete_adjoint_properties(circle64):
    N = ops.assemble_reflection(circle64, "N")
    assert np.abs(ops.discrete_adjoint(N).matrix() - N.matrix()).max() < 1e-13
    E = ops.assemble_E_2d(circle64).densified()
    Ea = ops.discrete_adjoint(ops.discrete_adjoint(E))
    assert np.array_equal(Ea.matrix(), E.matrix()) or np.abs(Ea.matrix() - E.matrix()).max() < 1e-14
    ES = ops.assemble_ES(circle64).densified()
    assert np.abs(ops.discrete_adjoint(ES).matrix() + ES.matrix()).max() < 1e-12


def test_realification_commutes_with_complex_structure(circle64):
    E = ops.assemble_E_2d(circle64)
    R = E.real_matrix()
    J = ops.complex_structure(64 * 4)
    assert np.abs(R @ J - J @ R).max() < 1e-13


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_grid_function_operator_application_matches_matrix(bi, bj, seed):
    c = make_circle(1.0, 16)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
    A = ops.assemble_reflection(c, "NST"[bi % 3]) @ ops.assemble_E_2d(c) if bj else ops.assemble_E_2d(c)
    assert np.allclose(A.apply(f).ravel(), A.matrix() @ f.ravel())
    gf = ops.GridFunction(c, f)
    assert np.allclose(A(gf).values, A.apply(f))


def test_dense_cap():
    s = make_icosphere(1.0, 4)  # 5120 panels, 40960 unknowns
    with pytest.raises(ops.DenseCapError):
        ops.identity(s).matrix()


def test_dump_roundtrip(tmp_path, circle64):
    E = ops.assemble_E_2d(circle64)
    header = ops.dump_operator(E, tmp_path / "E.bin")
    back_header, mat = ops.load_operator_dump(tmp_path / "E.bin")
    assert back_header == header
    assert np.array_equal(mat, E.real_matrix())
    assert header["rows"] == 2 * 64 * 4


def test_surface_cauchy_reproduces_dipole_traces():
    errs = []
    for s in (1, 2):
        surf = make_icosphere(1.0, s)
        E = ops.assemble_E_3d(surf, 1.0)
        f = kn.dipole_field(1.0, [1.7, 0.2, -0.3], np.eye(8)[1])(surf.centroids)
        w = surf.weights[:, None]
        errs.append(np.sqrt(np.sum(w * np.abs(E.apply(f) - f) ** 2) / np.sum(w * np.abs(f) ** 2)))
    assert errs[1] < 0.7 * errs[0]


def test_errors(circle64):
    with pytest.raises(ValueError):
        ops.assemble_reflection(circle64, "X")
    with pytest.raises(ValueError):
        ops.assemble_E(circle64, 1.0)
    with pytest.raises(TypeError):
        ops.assemble_E_3d(circle64)
