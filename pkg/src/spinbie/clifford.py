"""Pointwise multivector algebra on the complexified exterior algebra of R^n.

Coefficients are stored densely along a trailing axis of length ``2**n`` in the
canonical blade order

* n = 2: ``1, e1, e2, e12``
* n = 3: ``1, e1, e2, e3, e12, e13, e23, e123``

All array functions accept stacked inputs of shape ``(..., 2**n)`` so that a
whole grid function can be processed in one call.  The :class:`Multivector`
dataclass is a thin immutable wrapper used for single values and for
readability in tests and examples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BladeTables",
    "tables",
    "blade_names",
    "blade_index",
    "Multivector",
    "basis",
    "vector",
    "wedge",
    "lcontract",
    "clifford_mul",
    "involution",
    "reversion",
    "conjugate",
    "grade",
    "even",
    "odd",
    "hodge_star",
    "inner",
    "reflect_N",
    "reflect_S",
    "reflect_T",
    "riesz_check",
    "left_matrix",
    "wedge_matrix",
    "lcontract_matrix",
    "right_matrix",
]


# ---------------------------------------------------------------------------
# Blade tables
# ---------------------------------------------------------------------------

def _canonical_masks(n: int) -> list[int]:
    masks = []
    for g in range(n + 1):
        for combo in itertools.combinations(range(n), g):
            masks.append(sum(1 << i for i in combo))
    return masks


def _reorder_sign(a: int, b: int) -> int:
    """Sign of moving the generators of blade ``b`` past those of ``a``."""
    swaps = 0
    a >>= 1
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1 if swaps & 1 else 1


@dataclass(frozen=True)
class BladeTables:
    """Structure constants of the three products for a fixed dimension.

    ``geo[a, b, c]`` is the coefficient of blade ``c`` in ``e_a e_b`` and
    likewise for ``ext`` (exterior product) and ``lc`` (left contraction).
    """

    n: int
    masks: tuple[int, ...]
    grades: np.ndarray
    geo: np.ndarray
    ext: np.ndarray
    lc: np.ndarray

    @property
    def dim(self) -> int:
        return 1 << self.n


@lru_cache(maxsize=None)
def tables(n: int) -> BladeTables:
    if n not in (2, 3):
        raise ValueError(f"only n = 2 or 3 is supported, got {n}")
    masks = _canonical_masks(n)
    pos = {m: i for i, m in enumerate(masks)}
    d = len(masks)
    geo = np.zeros((d, d, d))
    ext = np.zeros((d, d, d))
    lc = np.zeros((d, d, d))
    for ia, a in enumerate(masks):
        for ib, b in enumerate(masks):
            s = _reorder_sign(a, b)
            geo[ia, ib, pos[a ^ b]] = s
            if a & b == 0:
                ext[ia, ib, pos[a | b]] = s
            if a & b == a:
                # duality: e_A -| e_B = sgn(A, B\A) e_{B\A}
                rest = b & ~a
                lc[ia, ib, pos[rest]] = _reorder_sign(a, rest)
    grades = np.array([bin(m).count("1") for m in masks])
    for arr in (geo, ext, lc, grades):
        arr.setflags(write=False)
    return BladeTables(n, tuple(masks), grades, geo, ext, lc)


def blade_names(n: int) -> list[str]:
    out = []
    for m in tables(n).masks:
        if m == 0:
            out.append("1")
        else:
            out.append("e" + "".join(str(i + 1) for i in range(n) if m >> i & 1))
    return out


def blade_index(n: int, name: str) -> int:
    """Position of a blade given as ``"1"``, ``"e13"`` and so on."""
    try:
        return blade_names(n).index(name)
    except ValueError:
        raise KeyError(f"unknown blade {name!r} for n={n}") from None


def _dim_of(*arrays: np.ndarray) -> int:
    d = arrays[0].shape[-1]
    for a in arrays[1:]:
        if a.shape[-1] != d:
            raise ValueError(f"dimension mismatch: {d} vs {a.shape[-1]} coefficients")
    if d == 4:
        return 2
    if d == 8:
        return 3
    raise ValueError(f"expected 4 or 8 coefficients, got {d}")


def _bilinear(table_name: str, u, v) -> np.ndarray:
    u = np.asarray(u)
    v = np.asarray(v)
    n = _dim_of(u, v)
    table = getattr(tables(n), table_name)
    return np.einsum("...a,...b,abc->...c", u, v, table)


# ---------------------------------------------------------------------------
# Array-level operations
# ---------------------------------------------------------------------------

def wedge(u, v) -> np.ndarray:
    """Exterior product of coefficient arrays."""
    return _bilinear("ext", u, v)


def lcontract(u, v) -> np.ndarray:
    """Left interior product, adjoint of left exterior multiplication."""
    return _bilinear("lc", u, v)


def clifford_mul(u, v) -> np.ndarray:
    """Clifford product with positive squares of real vectors."""
    return _bilinear("geo", u, v)


def _grade_sign(u, rule) -> np.ndarray:
    u = np.asarray(u)
    g = tables(_dim_of(u)).grades
    return u * rule(g)


def involution(u) -> np.ndarray:
    return _grade_sign(u, lambda g: (-1.0) ** g)


def reversion(u) -> np.ndarray:
    return _grade_sign(u, lambda g: (-1.0) ** (g * (g - 1) // 2))


def conjugate(u) -> np.ndarray:
    """Complex conjugation of every coefficient."""
    return np.conj(u)


def grade(u, j: int) -> np.ndarray:
    u = np.asarray(u)
    g = tables(_dim_of(u)).grades
    return np.where(g == j, u, 0)


def even(u) -> np.ndarray:
    u = np.asarray(u)
    g = tables(_dim_of(u)).grades
    return np.where(g % 2 == 0, u, 0)


def odd(u) -> np.ndarray:
    u = np.asarray(u)
    g = tables(_dim_of(u)).grades
    return np.where(g % 2 == 1, u, 0)


# target index and sign of the Hodge star on each blade, n = 3
_HODGE3 = np.zeros((8, 8))
for _src, _dst, _sgn in [
    (0, 7, 1), (1, 6, 1), (2, 5, -1), (3, 4, 1),
    (4, 3, 1), (5, 2, -1), (6, 1, 1), (7, 0, 1),
]:
    _HODGE3[_dst, _src] = _sgn
_HODGE3.setflags(write=False)


def hodge_star(u) -> np.ndarray:
    """Euclidean Hodge star in three dimensions (an involution)."""
    u = np.asarray(u)
    if _dim_of(u) != 3:
        raise ValueError("the Hodge star is implemented for n = 3 only")
    return u @ _HODGE3.T


def inner(u, v) -> np.ndarray:
    """Hermitian inner product, conjugate-linear in the first slot."""
    u = np.asarray(u)
    v = np.asarray(v)
    _dim_of(u, v)
    return np.sum(np.conj(u) * v, axis=-1)


def _check_unit_vector(nu) -> np.ndarray:
    nu = np.asarray(nu)
    n = _dim_of(nu)
    g = tables(n).grades
    if np.any(np.abs(np.imag(nu)) > 0) or np.any(np.abs(nu[..., g != 1]) > 0):
        raise ValueError("normal must be a real grade-1 multivector")
    norm2 = np.sum(np.real(nu) ** 2, axis=-1)
    if np.any(np.abs(norm2 - 1.0) > 1e-12):
        raise ValueError("normal must have unit length")
    return np.real(nu)


def reflect_N(nu, f) -> np.ndarray:
    """Reflection of normal multivectors across tangential ones: nu f^ nu."""
    nu = _check_unit_vector(nu)
    return clifford_mul(clifford_mul(nu, involution(f)), nu)


def reflect_S(nu, f) -> np.ndarray:
    """Left Clifford multiplication by the unit normal."""
    nu = _check_unit_vector(nu)
    return clifford_mul(nu, f)


def reflect_T(f) -> np.ndarray:
    """Pointwise involution, the reflection fixing the even subalgebra."""
    return involution(f)


def riesz_check(a, w) -> tuple[np.ndarray, np.ndarray]:
    """Return the two Riesz combinations ``(aw + w^a)/2`` and ``(aw - w^a)/2``.

    For a grade-1 ``a`` these coincide with ``a ^ w`` and ``a -| w``.
    """
    aw = clifford_mul(a, w)
    wa = clifford_mul(involution(w), a)
    return 0.5 * (aw + wa), 0.5 * (aw - wa)


def left_matrix(u) -> np.ndarray:
    """Matrices of ``v -> u v`` for stacked ``u``; shape ``(..., d, d)``.

    Column index is the blade of ``v``, row index the blade of the result.
    """
    u = np.asarray(u)
    n = _dim_of(u)
    return np.einsum("...a,abc->...cb", u, tables(n).geo)


def wedge_matrix(u) -> np.ndarray:
    """Matrices of ``v -> u ^ v`` for stacked ``u``."""
    u = np.asarray(u)
    return np.einsum("...a,abc->...cb", u, tables(_dim_of(u)).ext)


def lcontract_matrix(u) -> np.ndarray:
    """Matrices of ``v -> u -| v`` for stacked ``u``."""
    u = np.asarray(u)
    return np.einsum("...a,abc->...cb", u, tables(_dim_of(u)).lc)


def right_matrix(u) -> np.ndarray:
    """Matrices of ``v -> v u`` for stacked ``u``."""
    u = np.asarray(u)
    n = _dim_of(u)
    return np.einsum("...b,abc->...ca", u, tables(n).geo)


# ---------------------------------------------------------------------------
# Value type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Multivector:
    """A single element of the complexified exterior algebra.

    Parameters
    ----------
    n : int
        Ambient dimension, 2 or 3.
    coeffs : array_like
        ``2**n`` complex coefficients in canonical blade order.
    """

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).reshape(-1)
        if self.n not in (2, 3) or c.size != 1 << self.n:
            raise ValueError(f"need {1 << self.n} coefficients for n={self.n}, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # arithmetic ------------------------------------------------------------
    def _wrap(self, c) -> "Multivector":
        return Multivector(self.n, c)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Multivector):
            if other.n != self.n:
                raise ValueError("dimension mismatch")
            return other.coeffs
        if np.isscalar(other):
            c = np.zeros(1 << self.n, dtype=complex)
            c[0] = other
            return c
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(self.coeffs + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(self.coeffs - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(o - self.coeffs)

    def __neg__(self):
        return self._wrap(-self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return self._wrap(self.coeffs * other)
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else self._wrap(clifford_mul(self.coeffs, o))

    def __rmul__(self, other):
        if np.isscalar(other):
            return self._wrap(self.coeffs * other)
        return NotImplemented

    def __xor__(self, other):
        return self._wrap(wedge(self.coeffs, self._coerce(other)))

    def __or__(self, other):
        """Left contraction ``self -| other``."""
        return self._wrap(lcontract(self.coeffs, self._coerce(other)))

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self):
        return hash((self.n, self.coeffs.tobytes()))

    def allclose(self, other: "Multivector", atol: float = 1e-13) -> bool:
        return self.n == other.n and bool(np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))

    # unary maps --------------------------------------------------------------
    def involution(self) -> "Multivector":
        return self._wrap(involution(self.coeffs))

    def reversion(self) -> "Multivector":
        return self._wrap(reversion(self.coeffs))

    def conjugate(self) -> "Multivector":
        return self._wrap(conjugate(self.coeffs))

    def grade(self, j: int) -> "Multivector":
        return self._wrap(grade(self.coeffs, j))

    def hodge(self) -> "Multivector":
        return self._wrap(hodge_star(self.coeffs))

    def __repr__(self):
        terms = [
            f"{c:.6g}*{name}" if name != "1" else f"{c:.6g}"
            for c, name in zip(self.coeffs, blade_names(self.n))
            if c != 0
        ]
        return f"Multivector(n={self.n}, " + (" + ".join(terms) or "0") + ")"


def basis(n: int, name: str) -> Multivector:
    c = np.zeros(1 << n, dtype=complex)
    c[blade_index(n, name)] = 1.0
    return Multivector(n, c)


def vector(components) -> np.ndarray:
    """Embed stacked real or complex vectors ``(..., n)`` as coefficient arrays."""
    v = np.asarray(components)
    n = v.shape[-1]
    out = np.zeros(v.shape[:-1] + (1 << n,), dtype=np.result_type(v, complex))
    out[..., 1 : n + 1] = v
    return out
