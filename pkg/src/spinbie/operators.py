"""Nystrom discretization of the boundary operators.

Grid functions take values in the algebra at every node (curves) or panel
centroid (surfaces) and are stored as complex arrays of shape ``(M, 2**n)``.
Every operator built here is complex-linear; it is stored in the cheapest of
three forms and realified only on request:

``blocks``
    block-diagonal pointwise multiplier, array ``(M, d_out, d_in)``;
``form``
    a :class:`KernelForm`, pointwise multipliers around a singular integral
    operator ``sum_b A_b (x) L[e_b]`` with node matrices ``A_b``;
``dense``
    a full complex matrix of shape ``(M*d_out, M*d_in)``.

A fourth storage, ``real``, holds a real matrix acting on realified
coordinates for operators that are only real-linear.

Realified coordinates stack real parts before imaginary parts, each in
node-major order: ``[Re c.ravel(), Im c.ravel()]`` for ``c`` of shape
``(M, d)``.  A complex matrix ``A`` becomes ``[[Re A, -Im A], [Im A, Re A]]``.

Discretization of the Cauchy integral
-------------------------------------
Curves use the alternating-point trapezoidal rule: the contribution of node
``j`` to target ``i`` carries the quadrature weight ``2 w_j`` when ``i - j`` is
odd and is dropped otherwise.  The rule is spectrally accurate for the principal value
on smooth curves, is an exact involution on the circle, and keeps the exact
skew structure of the kernel.  Corner curves may alternatively use the
composite trapezoid rule with the diagonal fixed by reproduction of
constants, ``E_ii = I - sum_{j != i} E_ij``.

Surfaces use centroid collocation with panel integrals from
:mod:`spinbie.quadrature`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import clifford as cl
from . import kernels as kn
from .geometry import Curve2D, Surface3D, make_corner_curve
from .quadrature import QuadratureOptions, panel_integrals

logger = logging.getLogger(__name__)

__all__ = [
    "DENSE_CAP",
    "DenseCapError",
    "GridFunction",
    "KernelForm",
    "RealLinearOperator",
    "realify",
    "complex_structure",
    "identity",
    "pointwise",
    "assemble_E_2d",
    "assemble_E_3d",
    "assemble_E",
    "assemble_ES",
    "assemble_K_2d",
    "assemble_Kstar_2d",
    "trig_interpolation",
    "assemble_reflection",
    "assemble_M",
    "blade_selector",
    "projections",
    "discrete_adjoint",
    "dump_operator",
    "load_operator_dump",
]

#: Largest complex dimension ``M * d`` for which a dense matrix is formed.
DENSE_CAP = 10240


class DenseCapError(MemoryError):
    """Raised when a dense matrix would exceed :data:`DENSE_CAP`."""


def _check_cap(size: int, what: str) -> None:
    if size > DENSE_CAP:
        raise DenseCapError(
            f"{what}: dense dimension {size} exceeds the cap of {DENSE_CAP} complex unknowns"
        )


# ---------------------------------------------------------------------------
# Grid functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridFunction:
    """Multivector values at the nodes of a mesh."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        d = 1 << self.mesh.ambient_dim
        if v.shape != (self.mesh.size, d):
            raise ValueError(f"values must have shape ({self.mesh.size}, {d}), got {v.shape}")
        object.__setattr__(self, "values", v)

    def realified(self) -> np.ndarray:
        return np.concatenate([self.values.real.ravel(), self.values.imag.ravel()])

    def norm(self) -> float:
        """Weighted L2 norm ``sqrt(sum_i w_i |f_i|^2)``."""
        return float(np.sqrt(np.sum(self.mesh.weights * np.sum(np.abs(self.values) ** 2, axis=1))))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.mesh, self.values - other.values)

    def __mul__(self, s) -> "GridFunction":
        return GridFunction(self.mesh, self.values * s)

    __rmul__ = __mul__


def realify(a: np.ndarray) -> np.ndarray:
    """Real form ``[[Re, -Im], [Im, Re]]`` of a complex matrix."""
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def complex_structure(size: int) -> np.ndarray:
    """Matrix of multiplication by ``i`` in realified coordinates."""
    z = np.zeros((size, size))
    eye = np.eye(size)
    return np.block([[z, -eye], [eye, z]])


# ---------------------------------------------------------------------------
# Kernel forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelTerm:
    """``left_i * sum_b coeff_b[i, j] L[e_b] * right_j`` summed over ``j``."""

    coeff: np.ndarray  # (nb, M, M)
    blades: tuple[int, ...]
    left: np.ndarray | None = None  # (M, d_out, d)
    right: np.ndarray | None = None  # (M, d, d_in)


@dataclass(frozen=True, eq=False)
class KernelForm:
    """Pointwise multiplier plus a sum of singular integral terms."""

    n: int
    n_nodes: int
    d_out: int
    d_in: int
    diag: np.ndarray | None
    terms: tuple[KernelTerm, ...]

    @property
    def d(self) -> int:
        return 1 << self.n

    def _blade_mats(self, blades) -> np.ndarray:
        eye = np.eye(self.d)
        return cl.left_matrix(eye[list(blades)])  # (nb, d, d)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.n_nodes, self.d_in)
        y = np.zeros((self.n_nodes, self.d_out), dtype=complex)
        if self.diag is not None:
            y += np.einsum("iab,ib->ia", self.diag, x)
        for t in self.terms:
            u = x if t.right is None else np.einsum("jab,jb->ja", t.right, x)
            mats = self._blade_mats(t.blades)
            w = np.zeros((self.n_nodes, self.d), dtype=complex)
            for cb, lb in zip(t.coeff, mats):
                w += (cb @ u) @ lb.T
            y += w if t.left is None else np.einsum("iab,ib->ia", t.left, w)
        return y.reshape(-1)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Conjugate transpose applied to ``y``."""
        y = y.reshape(self.n_nodes, self.d_out)
        x = np.zeros((self.n_nodes, self.d_in), dtype=complex)
        if self.diag is not None:
            x += np.einsum("iab,ia->ib", self.diag.conj(), y)
        for t in self.terms:
            w = y if t.left is None else np.einsum("iab,ia->ib", t.left.conj(), y)
            mats = self._blade_mats(t.blades)
            u = np.zeros((self.n_nodes, self.d), dtype=complex)
            for cb, lb in zip(t.coeff, mats):
                u += cb.conj().T @ (w @ lb.conj())
            x += u if t.right is None else np.einsum("jab,ja->jb", t.right.conj(), u)
        return x.reshape(-1)

    def dense(self, chunk: int = 64) -> np.ndarray:
        m = self.n_nodes
        _check_cap(m * max(self.d_out, self.d_in), "KernelForm.dense")
        out = np.zeros((m, self.d_out, m, self.d_in), dtype=complex)
        if self.diag is not None:
            idx = np.arange(m)
            out[idx, :, idx, :] = self.diag
        for t in self.terms:
            mats = self._blade_mats(t.blades)
            left = t.left if t.left is not None else np.broadcast_to(np.eye(self.d), (m, self.d, self.d))
            g = np.einsum("iam,bmc->ibac", left, mats)  # (M, nb, d_out, d)
            right = t.right if t.right is not None else None
            for lo in range(0, m, chunk):
                hi = min(m, lo + chunk)
                tmp = np.einsum("bij,ibam->iajm", t.coeff[:, lo:hi, :], g[lo:hi])
                if right is None:
                    out[lo:hi] += tmp
                else:
                    out[lo:hi] += np.einsum("iajm,jmc->iajc", tmp, right)
        return out.reshape(m * self.d_out, m * self.d_in)

    def left_multiply(self, blocks: np.ndarray) -> "KernelForm":
        diag = None if self.diag is None else np.einsum("iab,ibc->iac", blocks, self.diag)
        terms = tuple(
            replace(t, left=blocks if t.left is None else np.einsum("iab,ibc->iac", blocks, t.left))
            for t in self.terms
        )
        return KernelForm(self.n, self.n_nodes, blocks.shape[1], self.d_in, diag, terms)

    def right_multiply(self, blocks: np.ndarray) -> "KernelForm":
        diag = None if self.diag is None else np.einsum("iab,ibc->iac", self.diag, blocks)
        terms = tuple(
            replace(t, right=blocks if t.right is None else np.einsum("iab,ibc->iac", t.right, blocks))
            for t in self.terms
        )
        return KernelForm(self.n, self.n_nodes, self.d_out, blocks.shape[2], diag, terms)

    def scaled(self, s: complex) -> "KernelForm":
        diag = None if self.diag is None else s * self.diag
        terms = tuple(replace(t, coeff=s * t.coeff) for t in self.terms)
        return KernelForm(self.n, self.n_nodes, self.d_out, self.d_in, diag, terms)

    def add_blocks(self, blocks: np.ndarray) -> "KernelForm":
        diag = blocks if self.diag is None else self.diag + blocks
        return KernelForm(self.n, self.n_nodes, self.d_out, self.d_in, diag, self.terms)

    def add_form(self, other: "KernelForm") -> "KernelForm":
        diag = self.diag
        if other.diag is not None:
            diag = other.diag if diag is None else diag + other.diag
        return KernelForm(self.n, self.n_nodes, self.d_out, self.d_in, diag, self.terms + other.terms)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RealLinearOperator:
    """Linear operator on realified multivector grid functions.

    Attributes
    ----------
    mesh : Curve2D or Surface3D
    data : ndarray or KernelForm
        Storage, interpreted according to ``kind``.
    kind : {"blocks", "form", "dense", "real"}
    label : str
    out_blades, in_blades : tuple of int
        Blades (canonical indices) spanned by the range and domain coordinates.
    """

    mesh: object
    data: object
    kind: str
    label: str = ""
    out_blades: tuple[int, ...] | None = None
    in_blades: tuple[int, ...] | None = None

    def __post_init__(self):
        d = 1 << self.mesh.ambient_dim
        if self.out_blades is None:
            object.__setattr__(self, "out_blades", tuple(range(d)))
        if self.in_blades is None:
            object.__setattr__(self, "in_blades", tuple(range(d)))
        if self.kind not in ("blocks", "form", "dense", "real"):
            raise ValueError(f"unknown storage kind {self.kind!r}")
        rows, cols = self.shape
        if self.kind == "blocks" and self.data.shape != (self.n_nodes, len(self.out_blades), len(self.in_blades)):
            raise ValueError("block shape mismatch")
        if self.kind == "dense" and self.data.shape != (rows // 2, cols // 2):
            raise ValueError("dense shape mismatch")
        if self.kind == "real" and self.data.shape != (rows, cols):
            raise ValueError("real shape mismatch")

    # -- shape --------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.mesh.size

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the realified matrix."""
        m = self.n_nodes
        return 2 * m * len(self.out_blades), 2 * m * len(self.in_blades)

    @property
    def complex_shape(self) -> tuple[int, int]:
        return self.shape[0] // 2, self.shape[1] // 2

    @property
    def is_complex_linear(self) -> bool:
        return self.kind != "real"

    @property
    def weights(self) -> np.ndarray:
        return self.mesh.weights

    def _same(self, data, kind, label=None, out_blades=None, in_blades=None) -> "RealLinearOperator":
        return RealLinearOperator(
            self.mesh, data, kind, label if label is not None else self.label,
            out_blades if out_blades is not None else self.out_blades,
            in_blades if in_blades is not None else self.in_blades,
        )

    # -- conversions ----------------------------------------------------------
    def matrix(self) -> np.ndarray:
        """Complex matrix (complex-linear operators only)."""
        if self.kind == "real":
            raise TypeError("operator is only real-linear")
        if self.kind == "dense":
            return self.data
        if self.kind == "form":
            return self.data.dense()
        m = self.n_nodes
        do, di = self.data.shape[1:]
        _check_cap(m * max(do, di), self.label or "blocks")
        out = np.zeros((m, do, m, di), dtype=complex)
        idx = np.arange(m)
        out[idx, :, idx, :] = self.data
        return out.reshape(m * do, m * di)

    def real_matrix(self) -> np.ndarray:
        if self.kind == "real":
            return self.data
        return realify(self.matrix())

    def densified(self) -> "RealLinearOperator":
        if self.kind in ("dense", "real"):
            return self
        return self._same(self.matrix(), "dense")

    def as_form(self) -> KernelForm:
        if self.kind == "form":
            return self.data
        if self.kind == "blocks":
            return KernelForm(self.mesh.ambient_dim, self.n_nodes, *self.data.shape[1:], self.data, ())
        raise TypeError(f"cannot view {self.kind} storage as a kernel form")

    # -- application ------------------------------------------------------------
    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to complex coefficients ``(M, len(in_blades))``; returns ``(M, len(out_blades))``."""
        m = self.n_nodes
        x = np.asarray(values, dtype=complex).reshape(m, len(self.in_blades))
        if self.kind == "blocks":
            y = np.einsum("iab,ib->ia", self.data, x)
        elif self.kind == "form":
            y = self.data.matvec(x)
        elif self.kind == "dense":
            y = self.data @ x.ravel()
        else:
            xr = np.concatenate([x.real.ravel(), x.imag.ravel()])
            yr = self.data @ xr
            h = yr.size // 2
            y = yr[:h] + 1j * yr[h:]
        return y.reshape(m, len(self.out_blades))

    def apply_adjoint_unweighted(self, values: np.ndarray) -> np.ndarray:
        """Apply the conjugate transpose (Euclidean) of the complex matrix."""
        m = self.n_nodes
        y = np.asarray(values, dtype=complex).reshape(m, len(self.out_blades))
        if self.kind == "blocks":
            x = np.einsum("iab,ia->ib", self.data.conj(), y)
        elif self.kind == "form":
            x = self.data.rmatvec(y)
        elif self.kind == "dense":
            x = self.data.conj().T @ y.ravel()
        else:
            raise TypeError("real-linear storage has no complex adjoint")
        return x.reshape(m, len(self.in_blades))

    def __call__(self, f: GridFunction) -> GridFunction:
        if len(self.in_blades) != len(f.values[0]) or len(self.out_blades) != len(f.values[0]):
            raise ValueError("use apply() for operators between blade subspaces")
        return GridFunction(self.mesh, self.apply(f.values))

    # -- algebra ----------------------------------------------------------------
    def __matmul__(self, other: "RealLinearOperator") -> "RealLinearOperator":
        if not isinstance(other, RealLinearOperator):
            return NotImplemented
        if other.mesh is not self.mesh:
            raise ValueError("operators live on different meshes")
        if self.in_blades != other.out_blades:
            raise ValueError("blade subspaces do not match")
        label = f"{self.label}*{other.label}"
        ob, ib = self.out_blades, other.in_blades
        if "real" in (self.kind, other.kind):
            return RealLinearOperator(self.mesh, self.real_matrix() @ other.real_matrix(), "real", label, ob, ib)
        if self.kind == "blocks" and other.kind == "blocks":
            return RealLinearOperator(self.mesh, np.einsum("iab,ibc->iac", self.data, other.data), "blocks", label, ob, ib)
        if self.kind == "blocks" and other.kind == "form":
            return RealLinearOperator(self.mesh, other.data.left_multiply(self.data), "form", label, ob, ib)
        if self.kind == "form" and other.kind == "blocks":
            return RealLinearOperator(self.mesh, self.data.right_multiply(other.data), "form", label, ob, ib)
        if self.kind == "blocks":
            return RealLinearOperator(self.mesh, _blocks_times_dense(self.data, other.matrix()), "dense", label, ob, ib)
        if other.kind == "blocks":
            return RealLinearOperator(self.mesh, _dense_times_blocks(self.matrix(), other.data), "dense", label, ob, ib)
        return RealLinearOperator(self.mesh, self.matrix() @ other.matrix(), "dense", label, ob, ib)

    def __add__(self, other: "RealLinearOperator") -> "RealLinearOperator":
        if not isinstance(other, RealLinearOperator):
            return NotImplemented
        if other.mesh is not self.mesh or other.out_blades != self.out_blades or other.in_blades != self.in_blades:
            raise ValueError("incompatible operators")
        label = f"({self.label}+{other.label})"
        kinds = {self.kind, other.kind}
        if "real" in kinds:
            return self._same(self.real_matrix() + other.real_matrix(), "real", label)
        if kinds == {"blocks"}:
            return self._same(self.data + other.data, "blocks", label)
        if kinds <= {"blocks", "form"}:
            a, b = (self, other) if self.kind == "form" else (other, self)
            if b.kind == "blocks":
                return self._same(a.data.add_blocks(b.data), "form", label)
            return self._same(a.data.add_form(b.data), "form", label)
        return self._same(self.matrix() + other.matrix(), "dense", label)

    def __neg__(self) -> "RealLinearOperator":
        return self * -1.0

    def __sub__(self, other: "RealLinearOperator") -> "RealLinearOperator":
        return self + (-other)

    def __mul__(self, s) -> "RealLinearOperator":
        if not np.isscalar(s):
            return NotImplemented
        if self.kind == "form":
            return self._same(self.data.scaled(s), "form")
        if self.kind == "real":
            if np.iscomplexobj(s) and complex(s).imag != 0:
                raise TypeError("real-linear operator: only real scalars commute")
            return self._same(self.data * float(np.real(s)), "real")
        return self._same(self.data * s, self.kind)

    __rmul__ = __mul__

    def restrict(self, out_blades, in_blades) -> "RealLinearOperator":
        """Compress onto blade subspaces: rows ``out_blades``, columns ``in_blades``."""
        sel_out = blade_selector(self.mesh, out_blades, self.out_blades).data  # (M, |out|, |self.out|)
        emb_in = np.swapaxes(blade_selector(self.mesh, in_blades, self.in_blades).data, 1, 2)
        left = RealLinearOperator(self.mesh, sel_out, "blocks", "", tuple(out_blades), self.out_blades)
        right = RealLinearOperator(self.mesh, emb_in, "blocks", "", self.in_blades, tuple(in_blades))
        out = left @ self @ right
        return replace(out, label=self.label)


def _blocks_times_dense(blocks: np.ndarray, dense: np.ndarray) -> np.ndarray:
    m, do, di = blocks.shape
    d = dense.reshape(m, di, -1)
    return np.einsum("iab,ibc->iac", blocks, d).reshape(m * do, -1)


def _dense_times_blocks(dense: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    m, do, di = blocks.shape
    d = dense.reshape(-1, m, do)
    return np.einsum("rja,jab->rjb", d, blocks).reshape(-1, m * di)


# ---------------------------------------------------------------------------
# Pointwise operators
# ---------------------------------------------------------------------------

def pointwise(mesh, blocks: np.ndarray, label: str = "") -> RealLinearOperator:
    blocks = np.asarray(blocks, dtype=complex)
    if blocks.ndim == 2:
        blocks = np.broadcast_to(blocks, (mesh.size,) + blocks.shape).copy()
    return RealLinearOperator(mesh, blocks, "blocks", label)


def identity(mesh) -> RealLinearOperator:
    d = 1 << mesh.ambient_dim
    return pointwise(mesh, np.eye(d), "I")


def blade_selector(mesh, blades, from_blades=None) -> RealLinearOperator:
    """Pointwise selection of the coordinates ``blades`` out of ``from_blades``."""
    d = 1 << mesh.ambient_dim
    from_blades = tuple(range(d)) if from_blades is None else tuple(from_blades)
    sel = np.zeros((len(blades), len(from_blades)))
    for r, b in enumerate(blades):
        if b in from_blades:
            sel[r, from_blades.index(b)] = 1.0
    blocks = np.broadcast_to(sel, (mesh.size,) + sel.shape).astype(complex)
    return RealLinearOperator(mesh, blocks, "blocks", "select", tuple(blades), from_blades)


def _normal_mv(mesh) -> np.ndarray:
    return cl.vector(mesh.normal_vectors).real


def assemble_reflection(mesh, which: str) -> RealLinearOperator:
    """Pointwise reflection ``N`` (normal/tangential), ``S`` (left by normal) or ``T`` (involution)."""
    n = mesh.ambient_dim
    d = 1 << n
    nu = _normal_mv(mesh)
    inv = np.diag((-1.0) ** tables_grades(n))
    if which == "T":
        blocks = np.broadcast_to(inv, (mesh.size, d, d))
    elif which == "S":
        blocks = cl.left_matrix(nu)
    elif which == "N":
        blocks = cl.left_matrix(nu) @ cl.right_matrix(nu) @ inv
    else:
        raise ValueError(f"unknown reflection {which!r}")
    return pointwise(mesh, blocks, which)


def tables_grades(n: int) -> np.ndarray:
    return cl.tables(n).grades


def assemble_M(surface) -> RealLinearOperator:
    """Pointwise composition ``T+ S+ N+`` of the three projections (Maxwell multiplier)."""
    eye = identity(surface)
    plus = [0.5 * (eye + assemble_reflection(surface, w)) for w in ("T", "S", "N")]
    out = plus[0] @ plus[1] @ plus[2]
    return replace(out, label="M")


def projections(op: RealLinearOperator) -> tuple[RealLinearOperator, RealLinearOperator]:
    """Return ``((I + A)/2, (I - A)/2)``."""
    if op.out_blades != op.in_blades:
        raise ValueError("projections need a square operator")
    eye = pointwise(op.mesh, np.eye(len(op.in_blades)), "I")
    eye = replace(eye, out_blades=op.out_blades, in_blades=op.in_blades)
    if op.kind == "real":
        eye = eye._same(eye.real_matrix(), "real")
    plus = (eye + op) * 0.5
    minus = (eye - op) * 0.5
    return replace(plus, label=f"{op.label}+"), replace(minus, label=f"{op.label}-")


# ---------------------------------------------------------------------------
# Cauchy integral assembly
# ---------------------------------------------------------------------------

def _curve_weights(curve: Curve2D, rule: str) -> np.ndarray:
    m = curve.size
    idx = np.arange(m)
    if rule == "alternating":
        odd = ((idx[:, None] - idx[None, :]) % 2) == 1
        return np.where(odd, 2.0 * curve.weights[None, :], 0.0)
    if rule == "subtraction":
        c = np.broadcast_to(curve.weights[None, :], (m, m)).copy()
        c[idx, idx] = 0.0
        return c
    raise ValueError(f"unknown rule {rule!r}")


def _kernel_form_2d(curve: Curve2D, rule: str) -> KernelForm:
    """Kernel form of ``E S`` (no normal on the right) on a curve."""
    m = curve.size
    z = curve.nodes
    diff = z[None, :] - z[:, None]
    np.fill_diagonal(diff, 1.0)
    psi = kn.psi2_static(diff)
    c = 2.0 * _curve_weights(curve, rule)
    coeff = np.stack([c * psi.real, c * psi.imag])
    return KernelForm(2, m, 4, 4, None, (KernelTerm(coeff, (1, 2)),))


def default_rule(curve: Curve2D) -> str:
    """Principal-value rule used for the Cauchy operator on every curve."""
    return "alternating"


def assemble_E_2d(curve: Curve2D, rule: str | None = None) -> RealLinearOperator:
    """Cauchy singular integral operator on a closed curve (static).

    Acts as the Cauchy integral ``(1/(pi j)) p.v. int f(w)/(w - z) dw`` on the
    even part and as its conjugate analogue on the odd part.

    Parameters
    ----------
    curve : Curve2D
    rule : {"alternating", "subtraction"}, optional
        Principal-value quadrature; defaults to alternating points.
    """
    if not isinstance(curve, Curve2D):
        raise TypeError("assemble_E_2d needs a Curve2D")
    rule = rule or default_rule(curve)
    form = _kernel_form_2d(curve, rule).right_multiply(cl.left_matrix(_normal_mv(curve)))
    if rule == "subtraction":
        # reproduce constants exactly: E_ii = I - sum_j E_ij
        t = form.terms[0]
        mats = form._blade_mats(t.blades)
        row = np.einsum("bij,bmc,jcd->imd", t.coeff, mats, t.right)
        form = form.add_blocks(np.eye(4)[None] - row)
    return RealLinearOperator(curve, form, "form", "E")


def assemble_E_3d(surface: Surface3D, k=0.0, options: QuadratureOptions | None = None, integrals=None) -> RealLinearOperator:
    """Cauchy singular integral operator ``E_k`` on a closed triangulated surface.

    ``E_k f(x_i) = 2 sum_j [int_{T_j} Psi_k(y - x_i) dsigma(y)] nu_j f_j``.
    Precomputed panel integrals may be passed to avoid recomputation.
    """
    if not isinstance(surface, Surface3D):
        raise TypeError("assemble_E_3d needs a Surface3D")
    k = kn.check_wavenumber(k)
    p = panel_integrals(surface, k, options=options) if integrals is None else integrals
    form = KernelForm(3, surface.size, 8, 8, None, (KernelTerm(2.0 * p, (0, 1, 2, 3)),))
    form = form.right_multiply(cl.left_matrix(_normal_mv(surface)))
    return RealLinearOperator(surface, form, "form", f"E[k={k:g}]")


def assemble_E(mesh, k=0.0, **kwargs) -> RealLinearOperator:
    if isinstance(mesh, Curve2D):
        if complex(k) != 0:
            raise ValueError("planar operators are static (k = 0) only")
        return assemble_E_2d(mesh, **kwargs)
    return assemble_E_3d(mesh, k, **kwargs)


def assemble_ES(mesh, k=0.0, rule: str | None = None) -> RealLinearOperator:
    """Operator assembled directly from the kernel ``2 Psi_k(y - x)`` without the normal."""
    if isinstance(mesh, Curve2D):
        rule = rule or default_rule(mesh)
        if rule != "alternating":
            raise ValueError("direct kernel assembly is defined for the alternating rule")
        return RealLinearOperator(mesh, _kernel_form_2d(mesh, rule), "form", "ES")
    p = panel_integrals(mesh, k)
    form = KernelForm(3, mesh.size, 8, 8, None, (KernelTerm(2.0 * p, (0, 1, 2, 3)),))
    return RealLinearOperator(mesh, form, "form", "ES")


def _scalar_operator(curve: Curve2D, mat: np.ndarray, label: str) -> RealLinearOperator:
    return RealLinearOperator(curve, mat.astype(complex), "dense", label, (0,), (0,))


def trig_interpolation(m: int, factor: int) -> np.ndarray:
    """Trigonometric interpolation from ``m`` to ``factor * m`` midpoint grid nodes.

    Both grids are ``2 pi (i + 1/2) / n``; the Nyquist term is split
    symmetrically.
    """
    n = m * factor
    coarse = 2 * np.pi * (np.arange(m) + 0.5) / m
    fine = 2 * np.pi * (np.arange(n) + 0.5) / n
    d = fine[:, None] - coarse[None, :]
    half = np.sin(d / 2)
    on = np.isclose(half, 0.0, atol=1e-14)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.sin(m * d / 2) / (m * np.tan(d / 2))
    p[on] = 1.0
    return p


def _double_layer_oversampled(curve: Curve2D, factor: int) -> np.ndarray:
    """Double layer matrix integrating the interpolated density on a finer copy of a lens curve.

    The kernel is smooth on each arc but nearly singular across a thin
    corner, which the graded grid alone does not resolve.
    """
    if curve.kind != "corner":
        raise ValueError("the oversampled rule needs a corner curve (midpoint grid)")
    sp = curve.spec
    fine = make_corner_curve(sp["theta"], factor * curve.size, sp["grading_q"])
    d = fine.nodes[None, :] - curve.nodes[:, None]
    nu = fine.normal[None, :]
    ker = (d.real * nu.real + d.imag * nu.imag) / (np.pi * np.abs(d) ** 2)
    return (ker * fine.weights[None, :]) @ trig_interpolation(curve.size, factor)


def assemble_K_2d(curve: Curve2D, rule: str | None = None, factor: int = 8) -> RealLinearOperator:
    """Classical double layer ``K f(x) = 2 p.v. int grad Phi(y - x) . nu(y) f(y)``.

    Parameters
    ----------
    rule : {"subtraction", "oversampled", "alternating"}, optional
        ``"subtraction"`` (default on smooth curves) is the trapezoidal rule
        with the diagonal fixed by ``K 1 = 1``; it is the scalar block of the
        Cauchy operator with the same rule, so ``K f = Re(E f)``.
        ``"oversampled"`` (default on corner curves) integrates the
        trigonometric interpolant of the density on a grid ``factor`` times
        finer.  ``"alternating"`` is the scalar block of the default Cauchy
        operator; it maps the grid mode ``(-1)**i`` to its negative.
    """
    rule = rule or ("oversampled" if curve.kind == "corner" else "subtraction")
    if rule == "oversampled":
        return _scalar_operator(curve, _double_layer_oversampled(curve, factor), "K")
    e = assemble_E_2d(curve, rule)
    return _scalar_operator(curve, e.restrict((0,), (0,)).matrix().real, "K")


def assemble_Kstar_2d(curve: Curve2D, rule: str | None = None) -> RealLinearOperator:
    """Weighted transpose of :func:`assemble_K_2d`."""
    k = assemble_K_2d(curve, rule).matrix().real
    w = curve.weights
    return _scalar_operator(curve, (k.T * w[None, :]) / w[:, None], "K*")


def discrete_adjoint(op: RealLinearOperator) -> RealLinearOperator:
    """Adjoint for the weighted inner product ``sum_i w_i (f_i, g_i)``.

    Realified this is ``W^-1 A^T W``; for complex storage it is ``W^-1 A^H W``.
    """
    w = op.weights
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if op.kind == "blocks":
        return op._same(np.swapaxes(op.data.conj(), 1, 2), "blocks", f"{op.label}^*", op.in_blades, op.out_blades)
    nin, nout = len(op.in_blades), len(op.out_blades)
    if op.kind == "real":
        wr_out = np.tile(np.repeat(w, nout), 2)
        wr_in = np.tile(np.repeat(w, nin), 2)
        a = op.data
        return op._same((a.T * wr_out[None, :]) / wr_in[:, None], "real", f"{op.label}^*", op.in_blades, op.out_blades)
    a = op.matrix()
    wo = np.repeat(w, nout)
    wi = np.repeat(w, nin)
    return op._same((a.conj().T * wo[None, :]) / wi[:, None], "dense", f"{op.label}^*", op.in_blades, op.out_blades)


# ---------------------------------------------------------------------------
# Binary dump
# ---------------------------------------------------------------------------

_MAGIC = b"SPINOP01"


def mesh_hash(mesh) -> str:
    if hasattr(mesh, "hash"):
        return mesh.hash()
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.nodes, dtype="<c16").tobytes())
    h.update(np.ascontiguousarray(mesh.weights, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def dump_operator(op: RealLinearOperator, path) -> dict:
    """Write the realified matrix as row-major little-endian float64.

    Layout: 8-byte magic ``SPINOP01``, 8-byte little-endian header length,
    UTF-8 JSON header, then ``rows * cols`` doubles.
    """
    mat = np.ascontiguousarray(op.real_matrix(), dtype="<f8")
    header = {
        "rows": mat.shape[0], "cols": mat.shape[1], "label": op.label,
        "mesh_hash": mesh_hash(op.mesh), "n_nodes": op.n_nodes,
        "out_blades": list(op.out_blades), "in_blades": list(op.in_blades),
        "layout": "[Re c.ravel(), Im c.ravel()], node-major, canonical blade order",
    }
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(mat.tobytes())
    return header


def load_operator_dump(path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError("not an operator dump")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + hlen].decode())
    mat = np.frombuffer(data[16 + hlen :], dtype="<f8").reshape(header["rows"], header["cols"])
    return header, mat
