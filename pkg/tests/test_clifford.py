import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinbie import clifford as cl

FLOATS = st.floats(-3, 3, allow_nan=False)


def basis_vectors(n):
    return [np.eye(1 << n)[i] for i in range(1 << n)]


def random_mv(rng, n, shape=()):
    d = 1 << n
    return rng.standard_normal(shape + (d,)) + 1j * rng.standard_normal(shape + (d,))


@pytest.mark.parametrize("n", [2, 3])
def test_grade1_product_splits_into_contraction_and_wedge_exhaustively(n):
    grades = cl.tables(n).grades
    for a, w in itertools.product(basis_vectors(n), repeat=2):
        if grades[np.argmax(a)] != 1:
            continue
        assert np.array_equal(cl.clifford_mul(a, w), cl.lcontract(a, w) + cl.wedge(a, w))


@pytest.mark.parametrize("n", [2, 3])
def test_riesz_formulas_exact_on_basis(n):
    grades = cl.tables(n).grades
    for a, w in itertools.product(basis_vectors(n), repeat=2):
        if grades[np.argmax(a)] != 1:
            continue
        wed, con = cl.riesz_check(a, w)
        assert np.array_equal(wed, cl.wedge(a, w))
        assert np.array_equal(con, cl.lcontract(a, w))


def test_basis_products_in_three_dimensions():
    e = {name: cl.basis(3, name) for name in cl.blade_names(3)}
    assert e["e1"] * e["e2"] == e["e12"]
    assert e["e2"] * e["e1"] == -e["e12"]
    assert e["e1"] * e["e1"] == cl.basis(3, "1")
    assert e["e12"] * e["e12"] == -cl.basis(3, "1")
    assert e["e1"] * e["e2"] * e["e3"] == e["e123"]
    assert (e["e1"] ^ e["e1"]) == 0 * e["e1"]
    assert (e["e1"] | e["e12"]) == e["e2"]


def test_hodge_star_is_euclidean():
    e = {name: cl.basis(3, name) for name in cl.blade_names(3)}
    assert e["1"].hodge() == e["e123"]
    assert e["e1"].hodge() == e["e23"]
    assert e["e2"].hodge() == -e["e13"]
    assert e["e3"].hodge() == e["e12"]
    for name in cl.blade_names(3):
        assert e[name].hodge().hodge() == e[name]
        # a ^ *a = |a|^2 e123 for basis blades
        assert (e[name] ^ e[name].hodge()) == e["e123"]


@pytest.mark.parametrize("n", [2, 3])
def test_associativity_on_random_triples(n, rng):
    u, v, w = (random_mv(rng, n, (200,)) for _ in range(3))
    for op in (cl.clifford_mul, cl.wedge):
        lhs = op(op(u, v), w)
        rhs = op(u, op(v, w))
        assert np.abs(lhs - rhs).max() < 1e-13 * max(1.0, np.abs(lhs).max())


@pytest.mark.parametrize("n", [2, 3])
def test_riesz_formulas_on_random_multivectors(n, rng):
    a = cl.vector(rng.standard_normal((1000, n)) + 1j * rng.standard_normal((1000, n)))
    w = random_mv(rng, n, (1000,))
    wed, con = cl.riesz_check(a, w)
    assert np.abs(wed - cl.wedge(a, w)).max() < 1e-13
    assert np.abs(con - cl.lcontract(a, w)).max() < 1e-13


@pytest.mark.parametrize("n", [2, 3])
def test_contraction_is_adjoint_of_wedge(n, rng):
    a = cl.vector(rng.standard_normal(n))
    u, v = random_mv(rng, n), random_mv(rng, n)
    assert abs(cl.inner(cl.wedge(a, u), v) - cl.inner(u, cl.lcontract(a, v))) < 1e-13


@given(arrays(float, 3, elements=FLOATS))
def test_real_vectors_square_to_their_length(x):
    v = cl.vector(x)
    sq = cl.clifford_mul(v, v)
    assert np.allclose(sq[0], np.dot(x, x), atol=1e-12)
    assert np.allclose(sq[1:], 0, atol=1e-12)


@given(arrays(float, 3, elements=FLOATS).filter(lambda x: np.linalg.norm(x) > 1e-3),
       arrays(float, 16, elements=FLOATS))
@settings(max_examples=60)
def test_reflections_are_involutions(x, coeffs):
    nu = cl.vector(x / np.linalg.norm(x))
    f = coeffs[:8] + 1j * coeffs[8:]
    for refl in (lambda g: cl.reflect_N(nu, g), lambda g: cl.reflect_S(nu, g), cl.reflect_T):
        assert np.allclose(refl(refl(f)), f, atol=1e-12)


def test_reflection_relations():
    nu = cl.vector(np.array([0.0, 0.6, 0.8]))
    rng = np.random.default_rng(1)
    f = random_mv(rng, 3)
    st_ = cl.reflect_S(nu, cl.reflect_T(f)) + cl.reflect_T(cl.reflect_S(nu, f))
    assert np.abs(st_).max() < 1e-14
    # the cosine operator of N and T does not vanish: test on the normal vector itself
    normal = nu.astype(complex)
    nt = cl.reflect_N(nu, cl.reflect_T(normal)) + cl.reflect_T(cl.reflect_N(nu, normal))
    assert np.linalg.norm(nt) > 0.5


def test_N_fixes_tangential_and_flips_normal_parts():
    nu = cl.vector(np.array([0.0, 0.0, 1.0]))
    e1 = np.eye(8)[1]
    e3 = np.eye(8)[3]
    assert np.array_equal(cl.reflect_N(nu, e1), e1)
    assert np.array_equal(cl.reflect_N(nu, e3), -e3)


def test_grade_projections_and_involutions():
    rng = np.random.default_rng(2)
    f = random_mv(rng, 3)
    assert np.allclose(sum(cl.grade(f, j) for j in range(4)), f)
    assert np.allclose(cl.even(f) + cl.odd(f), f)
    assert np.allclose(cl.involution(cl.involution(f)), f)
    assert np.allclose(cl.reversion(cl.reversion(f)), f)
    # reversion is an anti-automorphism
    g = random_mv(rng, 3)
    assert np.allclose(cl.reversion(cl.clifford_mul(f, g)), cl.clifford_mul(cl.reversion(g), cl.reversion(f)))


def test_operator_matrices_match_products():
    rng = np.random.default_rng(3)
    u, v = random_mv(rng, 3), random_mv(rng, 3)
    assert np.allclose(cl.left_matrix(u) @ v, cl.clifford_mul(u, v))
    assert np.allclose(cl.right_matrix(u) @ v, cl.clifford_mul(v, u))
    assert np.allclose(cl.wedge_matrix(u) @ v, cl.wedge(u, v))
    assert np.allclose(cl.lcontract_matrix(u) @ v, cl.lcontract(u, v))


def test_errors():
    with pytest.raises(ValueError):
        cl.clifford_mul(np.zeros(4), np.zeros(8))
    with pytest.raises(ValueError):
        cl.reflect_S(cl.vector(np.array([1.0, 1.0, 0.0])), np.zeros(8))
    with pytest.raises(ValueError):
        cl.Multivector(3, np.zeros(5))
    with pytest.raises(ValueError):
        cl.hodge_star(np.zeros(4))
