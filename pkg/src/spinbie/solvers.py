"""Dense linear algebra on discretized boundary operators.

All norms are taken in the weighted discrete ``L2`` space with inner product
``sum_i w_i (f_i, g_i)``, which is what a discrete operator on ``L2`` of the
boundary should be measured in.  Because every assembled operator commutes
with multiplication by ``i``, singular values of the complex matrix coincide
with those of its realification (each appearing twice there); the complex
form is used whenever available.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, svds

from .operators import GridFunction, RealLinearOperator

logger = logging.getLogger(__name__)

__all__ = [
    "SingularSystemError",
    "SolveReport",
    "ConditionReport",
    "RestrictedMap",
    "SweepReport",
    "solve_dense",
    "solve_minnorm",
    "weighted_matrix",
    "singular_values",
    "condition_svd",
    "operator_norm",
    "restricted_map",
    "norm_inverse",
    "as_linear_operator",
    "calderon_residual",
    "skew_residual",
    "reproduction_error",
]

#: complex dimension above which norms switch to an iterative method
ITERATIVE_THRESHOLD = 4096


class SingularSystemError(np.linalg.LinAlgError):
    """Discrete system singular to working precision."""

    def __init__(self, message: str, sigma_min: float, sigma_max: float):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


@dataclass
class SolveReport:
    """Diagnostics of a dense solve.

    ``residual_norm`` is relative, ``||A x - b|| / ||b||`` in the Euclidean
    norm of the coefficients; ``condition_estimate`` is ``sigma_max / sigma_min``.
    """

    residual_norm: float
    condition_estimate: float
    sigma_min: float
    size: int
    elapsed: float
    sigma_max: float = float("nan")
    deflated: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConditionReport:
    sigma_max: float
    sigma_min: float
    kappa: float
    kappa_deflated: float
    deflated: int


@dataclass
class RestrictedMap:
    """Matrix of a map between subspaces in orthonormal bases.

    ``matrix`` maps coordinates in ``basis_in`` to coordinates in
    ``basis_out``; the bases are given in weighted coordinates
    (``W^{1/2}`` times the nodal values).
    """

    matrix: np.ndarray
    basis_in: np.ndarray
    basis_out: np.ndarray
    label: str = ""

    def real_matrix(self) -> np.ndarray:
        a = self.matrix
        return np.block([[a.real, -a.imag], [a.imag, a.real]])


@dataclass
class SweepReport:
    """Rows of diagnostics against a swept parameter, plus a summary.

    ``rows`` is a list of flat dictionaries sharing the same keys; the
    swept parameter is the column named ``parameter``.
    """

    parameter: str
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "rows": self.rows, "summary": self.summary}

    def write_csv(self, path) -> None:
        if not self.rows:
            raise ValueError("empty sweep")
        keys = list(self.rows[0])
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys)
            for r in self.rows:
                writer.writerow([_fmt(r[k]) for k in keys])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_jsonable))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"not serializable: {type(v)}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _weight_vectors(op: RealLinearOperator):
    w = op.weights
    return np.repeat(np.sqrt(w), len(op.out_blades)), np.repeat(np.sqrt(w), len(op.in_blades))


def weighted_matrix(op: RealLinearOperator, weighted: bool = True) -> np.ndarray:
    """``W^{1/2} A W^{-1/2}`` as a complex matrix."""
    a = op.matrix()
    if not weighted:
        return a
    so, si = _weight_vectors(op)
    if op.kind == "dense":
        return (so[:, None] * a) / si[None, :]
    # freshly materialized: scale in place to avoid a second dense copy
    a *= so[:, None]
    a /= si[None, :]
    return a


def as_linear_operator(op: RealLinearOperator, weighted: bool = True) -> LinearOperator:
    """Matrix-free ``W^{1/2} A W^{-1/2}`` for structured operators."""
    so, si = _weight_vectors(op) if weighted else (None, None)
    m = op.n_nodes

    def mv(x):
        x = np.asarray(x).reshape(-1)
        if weighted:
            x = x / si
        y = op.apply(x.reshape(m, -1)).reshape(-1)
        return y * so if weighted else y

    def rmv(y):
        y = np.asarray(y).reshape(-1)
        if weighted:
            y = y * so
        x = op.apply_adjoint_unweighted(y.reshape(m, -1)).reshape(-1)
        return x / si if weighted else x

    return LinearOperator(op.complex_shape, matvec=mv, rmatvec=rmv, dtype=complex)


def singular_values(op: RealLinearOperator, weighted: bool = True) -> np.ndarray:
    """All singular values (descending) of the complex matrix."""
    if not op.is_complex_linear:
        return sla.svdvals(op.real_matrix())
    return sla.svdvals(weighted_matrix(op, weighted), check_finite=False)


def operator_norm(op: RealLinearOperator, weighted: bool = True, tol: float = 1e-6) -> float:
    """Largest singular value; iterative for large operators."""
    if op.is_complex_linear and max(op.complex_shape) > ITERATIVE_THRESHOLD:
        lin = as_linear_operator(op, weighted)
        v0 = np.random.default_rng(0).standard_normal(op.complex_shape[1]) + 0j
        s = svds(lin, k=1, which="LM", return_singular_vectors=False, tol=tol, v0=v0)
        return float(s[0])
    return float(singular_values(op, weighted)[0])


def condition_svd(op: RealLinearOperator, weighted: bool = True, deflate: int = 0) -> ConditionReport:
    """Full-SVD condition number, optionally deflating the ``deflate`` smallest values."""
    s = singular_values(op, weighted)
    if not 0 <= deflate <= 4:
        raise ValueError("deflation is limited to at most 4 singular values")
    smin = s[-1]
    kd = s[0] / s[-1 - deflate] if s[-1 - deflate] > 0 else np.inf
    return ConditionReport(float(s[0]), float(smin), float(s[0] / smin) if smin > 0 else np.inf, float(kd), deflate)


def _svd_extremes_lu(a: np.ndarray, lu, iters: int = 30) -> tuple[float, float]:
    """Estimate extreme singular values with power iterations (using the LU factors)."""
    rng = np.random.default_rng(1)
    n = a.shape[0]
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    smax = 0.0
    for _ in range(iters):
        x = a.conj().T @ (a @ x)
        nx = np.linalg.norm(x)
        smax = np.sqrt(nx)
        x /= nx
    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    inv = 0.0
    for _ in range(iters):
        y = sla.lu_solve(lu, sla.lu_solve(lu, y, trans=2), trans=0)
        ny = np.linalg.norm(y)
        inv = np.sqrt(ny)
        y /= ny
    return float(smax), float(1.0 / inv) if inv > 0 else 0.0


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def solve_dense(A, b, exact_svd_limit: int = 2048, singular_tol: float = 1e-14):
    """LU solve with partial pivoting.

    Parameters
    ----------
    A : RealLinearOperator or ndarray
        Square operator (complex matrix accepted directly).
    b : GridFunction or ndarray
        Right-hand side; ``GridFunction`` values must match the operator blades.

    Returns
    -------
    x : same type as ``b``
    report : SolveReport

    Raises
    ------
    SingularSystemError
        If ``sigma_min < singular_tol * sigma_max``.
    """
    t0 = time.perf_counter()
    if isinstance(A, RealLinearOperator):
        if A.complex_shape[0] != A.complex_shape[1]:
            raise ValueError("operator must be square")
        if A.is_complex_linear:
            mat = A.matrix()
            real_mode = False
        else:
            mat = A.data
            real_mode = True
    else:
        mat = np.asarray(A)
        real_mode = False
    rhs_grid = isinstance(b, GridFunction)
    rhs = b.values if rhs_grid else np.asarray(b)
    shape = rhs.shape
    if real_mode and np.iscomplexobj(rhs):
        vec = np.concatenate([rhs.real.ravel(), rhs.imag.ravel()])
    else:
        vec = rhs.ravel()
    n = mat.shape[0]
    if vec.size != n:
        raise ValueError(f"right-hand side has {vec.size} entries, operator needs {n}")
    lu = sla.lu_factor(mat, check_finite=False)
    if n <= exact_svd_limit:
        s = sla.svdvals(mat, check_finite=False)
        smax, smin = float(s[0]), float(s[-1])
    else:
        smax, smin = _svd_extremes_lu(mat, lu)
    if smin < singular_tol * smax:
        raise SingularSystemError(f"system singular to working precision (sigma_min={smin:.3e})", smin, smax)
    x = sla.lu_solve(lu, vec, check_finite=False)
    res = float(np.linalg.norm(mat @ x - vec) / max(np.linalg.norm(vec), 1e-300))
    if real_mode and np.iscomplexobj(rhs):
        h = x.size // 2
        x = x[:h] + 1j * x[h:]
    x = x.reshape(shape)
    report = SolveReport(res, smax / smin if smin > 0 else np.inf, smin, n, time.perf_counter() - t0, smax)
    logger.info("dense solve n=%d residual=%.2e kappa=%.3e (%.2fs)", n, res, report.condition_estimate, report.elapsed)
    if rhs_grid:
        return GridFunction(b.mesh, x), report
    return x, report


# ---------------------------------------------------------------------------
# restricted maps
# ---------------------------------------------------------------------------

def solve_minnorm(A, b, exclude: np.ndarray | None = None, rank_tol: float = 1e-10,
                  max_deflate: int = 4, deflate: int | None = None):
    """Minimum-norm least-squares solve in the weighted norm by truncated SVD.

    Meant for systems with a known finite-dimensional kernel.  Singular
    values below ``rank_tol * sigma_max`` are dropped; at most
    ``max_deflate`` may be dropped, otherwise the system is reported as
    singular.

    Parameters
    ----------
    A : RealLinearOperator
    b : ndarray
        Flattened right-hand side matching ``A``'s output blades.
    exclude : ndarray (n, r), optional
        Columns spanning directions removed from the solution space before
        solving (in unweighted coordinates).  The solution is orthogonal to
        them in the weighted inner product.
    deflate : int, optional
        Drop exactly this many of the smallest singular values instead of
        using ``rank_tol``.  Appropriate when the dimension of the kernel of
        the underlying continuous problem is known.

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``deflated`` counts the dropped singular values and
        ``condition_estimate`` is the ratio over the retained ones.
    """
    t0 = time.perf_counter()
    so, si = _weight_vectors(A)
    aw = weighted_matrix(A)
    n = aw.shape[1]
    if exclude is not None:
        ex = np.asarray(exclude).reshape(n, -1) * si[:, None]
        q, _ = np.linalg.qr(ex, mode="complete")
        basis = q[:, ex.shape[1]:]
    else:
        basis = np.eye(n)
    u, s, vh = sla.svd(aw @ basis, full_matrices=False)
    if deflate is None:
        keep = s > rank_tol * s[0]
    else:
        if not 0 <= deflate <= max_deflate:
            raise ValueError(f"deflate must lie in [0, {max_deflate}]")
        keep = np.arange(len(s)) < len(s) - deflate
    drop = int(np.sum(~keep))
    if drop > max_deflate:
        raise SingularSystemError(f"{drop} singular values below tolerance", float(s[-1]), float(s[0]))
    bw = so * np.asarray(b).reshape(-1)
    y = basis @ (vh[keep].conj().T @ ((u[:, keep].conj().T @ bw) / s[keep]))
    x = y / si
    res = np.linalg.norm(aw @ y - bw) / max(np.linalg.norm(bw), 1e-300)
    smin = float(s[keep][-1])
    report = SolveReport(float(res), float(s[0] / smin), smin, n, time.perf_counter() - t0, float(s[0]), drop)
    logger.info("min-norm solve: n=%d deflated=%d kappa=%.3e residual=%.2e", n, drop, s[0] / smin, res)
    return x, report


def _pivoted_basis(p: np.ndarray, tol: float) -> np.ndarray:
    q, r, _ = sla.qr(p, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return q[:, :0]
    rank = int(np.sum(diag > tol * diag[0]))
    return q[:, :rank]


def _check_projector(p: RealLinearOperator, what: str, tol: float = 1e-12) -> None:
    if p.kind == "blocks":
        b = p.data
        err = np.max(np.abs(np.einsum("iab,ibc->iac", b, b) - b))
        scale = max(np.max(np.abs(b)), 1.0)
    else:
        m = p.matrix()
        err = np.max(np.abs(m @ m - m))
        scale = max(np.max(np.abs(m)), 1.0)
    if err > tol * scale:
        raise ValueError(f"{what} is not idempotent (deviation {err:.2e})")


def _range_basis(p: RealLinearOperator, tol: float) -> np.ndarray:
    """Orthonormal basis (weighted coordinates) of the range of a projector."""
    m = p.n_nodes
    d = len(p.out_blades)
    if p.kind == "blocks":
        # pointwise projectors commute with the scalar weights: per-node bases
        cols = []
        for i in range(m):
            q = _pivoted_basis(p.data[i], tol)
            block = np.zeros((m * d, q.shape[1]), dtype=complex)
            block[i * d : (i + 1) * d] = q
            cols.append(block)
        return np.concatenate(cols, axis=1)
    return _pivoted_basis(weighted_matrix(p), tol)


def restricted_map(A: RealLinearOperator, P: RealLinearOperator | None = None, Q: RealLinearOperator | None = None,
                   tol: float = 1e-10, check: bool = True) -> RestrictedMap:
    """Matrix of ``Q A`` restricted to ``range(P)``, in orthonormal bases.

    ``P`` and ``Q`` default to the identity.  Bases are orthonormal in the
    weighted inner product, so singular values of the returned matrix are the
    singular values of the restricted map between subspaces of ``L2``.
    """
    if check:
        for proj, name in ((P, "domain projector"), (Q, "range projector")):
            if proj is not None:
                _check_projector(proj, name)
    aw = weighted_matrix(A)
    n_in = aw.shape[1]
    n_out = aw.shape[0]
    bp = np.eye(n_in, dtype=complex) if P is None else _range_basis(P, tol)
    bq = np.eye(n_out, dtype=complex) if Q is None else _range_basis(Q, tol)
    if bp.shape[1] == 0 or bq.shape[1] == 0:
        raise ValueError("projector has empty range")
    mat = bq.conj().T @ (aw @ bp)
    return RestrictedMap(mat, bp, bq, A.label)


def norm_inverse(rmap: RestrictedMap | np.ndarray, floor: float = 1e-14) -> float:
    """``1 / sigma_min`` of a restricted map."""
    mat = rmap.matrix if isinstance(rmap, RestrictedMap) else np.asarray(rmap)
    s = sla.svdvals(mat)
    smin = s[min(mat.shape) - 1]
    if smin < floor * s[0]:
        raise SingularSystemError("restricted map is not injective at the discrete level", float(smin), float(s[0]))
    return float(1.0 / smin)


# ---------------------------------------------------------------------------
# operator diagnostics
# ---------------------------------------------------------------------------

def _adjoint_apply(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    # a^H x without forming the conjugate transpose
    return (np.ravel(x).conj() @ a).conj()


def _largest_sv(matvec, rmatvec, n: int) -> float:
    lin = LinearOperator((n, n), matvec=lambda x: matvec(np.ravel(x)),
                         rmatvec=lambda y: rmatvec(np.ravel(y)), dtype=complex)
    v0 = np.random.default_rng(0).standard_normal(n) + 0j
    return float(svds(lin, k=1, which="LM", return_singular_vectors=False, tol=1e-6, v0=v0)[0])


def calderon_residual(E: RealLinearOperator) -> float:
    """``||E**2 - I||`` in the weighted norm (zero for an exact Cauchy operator)."""
    a = weighted_matrix(E)
    n = a.shape[0]
    if n > ITERATIVE_THRESHOLD:
        return _largest_sv(lambda x: a @ (a @ x) - x,
                           lambda y: _adjoint_apply(a, _adjoint_apply(a, y)) - y, n)
    r = a @ a
    r[np.diag_indices_from(r)] -= 1.0
    return float(sla.svdvals(r, check_finite=False, overwrite_a=True)[0])


def skew_residual(ES: RealLinearOperator) -> float:
    """``||(ES)^* + ES|| / ||ES||`` with the adjoint of the weighted inner product."""
    a = weighted_matrix(ES)
    n = a.shape[0]
    # in weighted coordinates the adjoint is the conjugate transpose
    if n <= ITERATIVE_THRESHOLD:
        return float(sla.svdvals(a + a.conj().T, check_finite=False)[0] / sla.svdvals(a, check_finite=False)[0])

    def sym(x):
        return a @ x + _adjoint_apply(a, x)

    num = _largest_sv(sym, sym, n)
    den = _largest_sv(lambda x: a @ x, lambda y: _adjoint_apply(a, y), n)
    return num / den


def reproduction_error(E: RealLinearOperator, values: np.ndarray, sign: float = 1.0) -> float:
    """Weighted relative error of ``E f = sign * f`` for a sampled trace ``f``."""
    f = np.asarray(values, dtype=complex)
    w = E.weights[:, None]
    diff = E.apply(f) - sign * f
    return float(np.sqrt(np.sum(w * np.abs(diff) ** 2) / np.sum(w * np.abs(f) ** 2)))
