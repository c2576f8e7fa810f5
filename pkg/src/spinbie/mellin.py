"""Fourier-Mellin symbols of the planar Cauchy operator on a two-sided cone.

The cone ``{0 < arg z < theta}`` is pulled back to two copies of the real
line by ``t -> e^{t/2} f(e^t)`` on each ray and Fourier transformed in ``t``.
The Cauchy operator then becomes multiplication by a 2x2 matrix of bicomplex
numbers depending on the frequency ``xi``, with ``alpha = pi - theta``.

Bicomplex numbers ``z + j w`` (``z, w`` complex in the unit ``i``) are stored
as 2x2 complex matrices in the basis ``{1, j}`` with ``j = [[0, 1], [-1, 0]]``;
reversion ``N`` (``j -> -j``) is ``diag(1, -1)``.  Every operator here commutes
with multiplication by ``i``, so operator norms of the realified (real-linear)
matrices equal those of the complex matrices; norms are nevertheless taken of
the realified matrices, which is the definition for real-linear maps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .solvers import SweepReport

logger = logging.getLogger(__name__)

__all__ = [
    "Bicomplex",
    "MellinSymbol",
    "J",
    "N_REVERSION",
    "bicomplex_matrix",
    "realify_complex",
    "symbol_E",
    "symbol_NpENp",
    "npenp_closed_form",
    "inv_norm_IplusK",
    "schur_closed_form",
    "schur_inverse_closed_form",
    "symbol_IplusEN",
    "symbol_IplusEN_inverse",
    "inv_norm_IplusEN",
    "restricted_inverse_norms",
    "default_xi_grid",
    "fit_power_law",
    "theta_sweep",
]


def bicomplex_matrix(z, w=0.0) -> np.ndarray:
    """Matrix of multiplication by ``z + j w``; broadcasts over array inputs."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    z, w = np.broadcast_arrays(z, w)
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = z
    out[..., 0, 1] = w
    out[..., 1, 0] = -w
    out[..., 1, 1] = z
    return out


J = bicomplex_matrix(0.0, 1.0)
N_REVERSION = np.diag([1.0, -1.0]).astype(complex)
_I2 = np.eye(2, dtype=complex)


def realify_complex(a: np.ndarray) -> np.ndarray:
    """Real matrix ``[[Re, -Im], [Im, Re]]`` of a complex matrix (batched)."""
    a = np.asarray(a, dtype=complex)
    top = np.concatenate([a.real, -a.imag], axis=-1)
    bottom = np.concatenate([a.imag, a.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


@dataclass(frozen=True)
class Bicomplex:
    """``c0 + c1 i + c2 j + c3 ij`` with commuting units ``i**2 = j**2 = -1``."""

    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    @classmethod
    def from_pair(cls, z: complex, w: complex = 0.0) -> "Bicomplex":
        """``z + j w`` with ``z, w`` complex in ``i``."""
        z, w = complex(z), complex(w)
        return cls(z.real, z.imag, w.real, w.imag)

    @property
    def pair(self) -> tuple[complex, complex]:
        return complex(self.c0, self.c1), complex(self.c2, self.c3)

    def __add__(self, other: "Bicomplex") -> "Bicomplex":
        return Bicomplex(self.c0 + other.c0, self.c1 + other.c1, self.c2 + other.c2, self.c3 + other.c3)

    def __sub__(self, other: "Bicomplex") -> "Bicomplex":
        return Bicomplex(self.c0 - other.c0, self.c1 - other.c1, self.c2 - other.c2, self.c3 - other.c3)

    def __mul__(self, other: "Bicomplex") -> "Bicomplex":
        z1, w1 = self.pair
        z2, w2 = other.pair
        return Bicomplex.from_pair(z1 * z2 - w1 * w2, z1 * w2 + w1 * z2)

    def reversion(self) -> "Bicomplex":
        """``j -> -j``."""
        return Bicomplex(self.c0, self.c1, -self.c2, -self.c3)

    def matrix(self) -> np.ndarray:
        return bicomplex_matrix(*self.pair)

    def coeffs(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3])


@dataclass(frozen=True)
class MellinSymbol:
    """Symbol at one frequency: a 2x2 array of bicomplex blocks stored as a 4x4 complex matrix."""

    theta: float
    xi: float
    matrix: np.ndarray

    @property
    def alpha(self) -> float:
        return np.pi - self.theta

    def entry(self, row: int, col: int) -> np.ndarray:
        return self.matrix[2 * row : 2 * row + 2, 2 * col : 2 * col + 2]

    def realified(self) -> np.ndarray:
        return realify_complex(self.matrix)


def _check_theta(theta: float) -> None:
    # theta = pi is the flat boundary, allowed as a limiting case
    if not 0 < theta <= np.pi:
        raise ValueError(f"theta must lie in (0, pi], got {theta}")


def _expj(phi):
    return bicomplex_matrix(np.cos(phi), np.sin(phi))


def _symbol_E_batch(theta: float, xi: np.ndarray, printed: bool = False) -> np.ndarray:
    """Batched symbols, shape (len(xi), 4, 4)."""
    alpha = np.pi - theta
    xi = np.asarray(xi, dtype=float)
    t = np.tanh(np.pi * xi)[:, None, None]
    c = np.cosh(alpha * xi)[:, None, None]
    s = np.sinh(alpha * xi)[:, None, None]
    sech = (1.0 / np.cosh(np.pi * xi))[:, None, None]
    ij = 1j * J
    e11 = -ij * t
    e22 = ij * t
    e12 = _expj(-alpha / 2) @ (J * c - 1j * s * _I2) * sech
    # The lower-left entry carries exp(+j alpha/2); with the opposite sign the
    # symbol is not an involution and its compression by N+ disagrees with
    # sin(alpha/2 - i alpha xi) / cosh(pi xi).
    sign = -1.0 if printed else 1.0
    e21 = _expj(sign * alpha / 2) @ (-J * c - 1j * s * _I2) * sech
    top = np.concatenate([e11, e12], axis=-1)
    bottom = np.concatenate([e21, e22], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def symbol_E(theta: float, xi: float, printed: bool = False) -> MellinSymbol:
    """Symbol of the Cauchy operator on the cone of angle ``theta`` at frequency ``xi``.

    Diagonal entries ``-/+ ij tanh(pi xi)``; off-diagonal entries
    ``exp(-/+ j alpha/2) (+/- j cosh(alpha xi) - i sinh(alpha xi)) / cosh(pi xi)``.
    ``printed=True`` uses ``exp(-j alpha/2)`` in both off-diagonal entries,
    which does not square to the identity (kept for comparison).
    """
    _check_theta(theta)
    return MellinSymbol(float(theta), float(xi), _symbol_E_batch(theta, np.array([xi]), printed)[0])


def symbol_NpENp(theta: float, xi: float) -> np.ndarray:
    """Compression ``N+ E N+`` to the scalar components: a 2x2 complex matrix."""
    sym = symbol_E(theta, xi)
    return np.array([[sym.entry(r, c)[0, 0] for c in range(2)] for r in range(2)])


def npenp_closed_form(theta: float, xi):
    """``sin(alpha/2 - i alpha xi) / cosh(pi xi)``, the off-diagonal entry of ``N+ E N+``."""
    alpha = np.pi - theta
    xi = np.asarray(xi, dtype=float)
    return np.sin(alpha / 2 - 1j * alpha * xi) / np.cosh(np.pi * xi)


def default_xi_grid(xi_max: float = 40.0, per_sign: int = 2001, uniform: int = 401) -> np.ndarray:
    """Symmetric geometric grid on ``[1e-4, xi_max]`` per sign plus a uniform grid on ``[-1/2, 1/2]``."""
    g = np.geomspace(1e-4, xi_max, per_sign)
    return np.unique(np.concatenate([-g, g, np.linspace(-0.5, 0.5, uniform)]))


def _max_sv(mats: np.ndarray) -> np.ndarray:
    return np.linalg.svd(realify_complex(mats), compute_uv=False)[..., 0]


def _min_sv(mats: np.ndarray) -> np.ndarray:
    return np.linalg.svd(realify_complex(mats), compute_uv=False)[..., -1]


def inv_norm_IplusK(theta: float, xi_grid: np.ndarray | None = None) -> float:
    """``sup_xi ||(I + N+ E N+)^{-1}||`` over the grid (the double layer symbol)."""
    _check_theta(theta)
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    c = npenp_closed_form(theta, xi)
    mats = np.zeros((len(xi), 2, 2), dtype=complex)
    mats[:, 0, 0] = mats[:, 1, 1] = 1.0
    mats[:, 0, 1] = mats[:, 1, 0] = c
    return float(np.max(1.0 / _min_sv(mats)))


def schur_closed_form(theta: float, xi: float) -> np.ndarray:
    """``d - c a^{-1} b = 1 + ij tanh(2 pi xi) N + (cos a + j sin a)(cosh 2a xi - ij sinh 2a xi)/cosh 2 pi xi``."""
    alpha = np.pi - theta
    ij = 1j * J
    rot = bicomplex_matrix(np.cos(alpha), np.sin(alpha))
    tail = rot @ (np.cosh(2 * alpha * xi) * _I2 - ij * np.sinh(2 * alpha * xi)) / np.cosh(2 * np.pi * xi)
    return _I2 + np.tanh(2 * np.pi * xi) * ij @ N_REVERSION + tail


def _xy(theta: float, xi: float) -> tuple[complex, complex]:
    alpha = np.pi - theta
    ch = np.cosh(2 * np.pi * xi)
    x = (np.cos(alpha) * np.cosh(2 * alpha * xi) + 1j * np.sin(alpha) * np.sinh(2 * alpha * xi)) / ch
    y = (1j * np.cos(alpha) * np.sinh(2 * alpha * xi) - np.sin(alpha) * np.cosh(2 * alpha * xi)) / ch
    return complex(x), complex(y)


def schur_inverse_closed_form(theta: float, xi: float) -> np.ndarray:
    """``(d - c a^{-1} b)^{-1} = [[1 + X, i tanh(2 pi xi) + Y], [i tanh(2 pi xi) - Y, 1 + X]] / (2 + 2X)``."""
    x, y = _xy(theta, xi)
    if abs(1 + x) < 1e-300:
        raise ZeroDivisionError("1 + X vanishes")
    t2 = np.tanh(2 * np.pi * xi)
    return np.array([[1 + x, 1j * t2 + y], [1j * t2 - y, 1 + x]]) / (2 + 2 * x)


def symbol_IplusEN(theta: float, xi: float) -> np.ndarray:
    """Complex 4x4 matrix of ``I + E N`` with ``N`` acting blockwise."""
    sym = symbol_E(theta, xi)
    return np.eye(4) + sym.matrix @ np.kron(np.eye(2), N_REVERSION)


def symbol_IplusEN_inverse(theta: float, xi: float, realified: bool = True) -> np.ndarray:
    """Inverse of ``I + E N`` from the block formulas.

    ``a^{-1} = (1 + ij tanh(pi xi) N) / (1 + tanh(pi xi)**2)`` and the closed
    form of the inverse Schur complement ``S^{-1}`` are combined as::

        [[a^-1 + a^-1 b S^-1 c a^-1,  -a^-1 b S^-1],
         [-S^-1 c a^-1,               S^-1      ]]

    Returns the realified 8x8 matrix unless ``realified=False``.
    """
    _check_theta(theta)
    x, _ = _xy(theta, xi)
    assert abs(1 + x) > 0, "1 + X must not vanish for theta in (0, pi)"
    a_full = symbol_IplusEN(theta, xi)
    b = a_full[:2, 2:]
    c = a_full[2:, :2]
    t = np.tanh(np.pi * xi)
    a_inv = (_I2 + t * (1j * J) @ N_REVERSION) / (1 + t**2)
    s_inv = schur_inverse_closed_form(theta, xi)
    top = np.concatenate([a_inv + a_inv @ b @ s_inv @ c @ a_inv, -a_inv @ b @ s_inv], axis=1)
    bottom = np.concatenate([-s_inv @ c @ a_inv, s_inv], axis=1)
    inv = np.concatenate([top, bottom], axis=0)
    return realify_complex(inv) if realified else inv


def inv_norm_IplusEN(theta: float, xi_grid: np.ndarray | None = None) -> float:
    """``sup_xi ||(I + E N)^{-1}||`` using the block inverse formula."""
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    return float(max(np.linalg.norm(symbol_IplusEN_inverse(theta, x), 2) for x in xi))


def _range_basis(p: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(p)
    return u[..., :, :2] if p.ndim == 3 else u[:, s > 0.5]


def restricted_inverse_norms(theta: float, xi_grid: np.ndarray | None = None) -> tuple[float, float]:
    """``sup_xi`` of ``||(N+ : E+ L2 -> N+ L2)^{-1}||`` and ``||(E+ : N+ L2 -> E+ L2)^{-1}||``.

    Both ranges are two-dimensional at every frequency.
    """
    _check_theta(theta)
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    e = _symbol_E_batch(theta, xi)
    ep = 0.5 * (np.eye(4) + e)
    npj = 0.5 * (np.eye(4) + np.kron(np.eye(2), N_REVERSION))
    be = _range_basis(ep)
    bn = _range_basis(np.broadcast_to(npj, ep.shape))
    bnh = np.conj(np.swapaxes(bn, -1, -2))
    beh = np.conj(np.swapaxes(be, -1, -2))
    n_on_e = bnh @ npj @ be
    e_on_n = beh @ ep @ bn
    return float(np.max(1.0 / _min_sv(n_on_e))), float(np.max(1.0 / _min_sv(e_on_n)))


def fit_power_law(thetas, values) -> tuple[float, float]:
    """Least-squares slope of ``log(value)`` against ``log(1/theta)`` and its ``R**2``."""
    lx = np.log(1.0 / np.asarray(thetas, dtype=float))
    ly = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return float(slope), float(r2)


def theta_sweep(thetas, xi_grid: np.ndarray | None = None) -> SweepReport:
    """Suprema of the inverse symbol norms over ``xi`` for each ``theta`` with power-law fits."""
    thetas = [float(t) for t in thetas]
    if len(thetas) < 3:
        raise ValueError("a power-law fit needs at least three angles")
    xi = default_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    report = SweepReport("theta")
    for theta in thetas:
        ik = inv_norm_IplusK(theta, xi)
        ien = inv_norm_IplusEN(theta, xi)
        n_e, e_n = restricted_inverse_norms(theta, xi)
        report.rows.append({
            "theta": theta, "inv_IplusK": ik, "inv_IplusEN": ien,
            "inv_Np_on_Ep": n_e, "inv_Ep_on_Np": e_n,
        })
        logger.info("theta=%.4g |(I+K)^-1|=%.4g |(I+EN)^-1|=%.4g", theta, ik, ien)
    summary = {"xi_points": int(len(xi)), "xi_max": float(np.max(np.abs(xi)))}
    for key in ("inv_IplusK", "inv_IplusEN", "inv_Np_on_Ep", "inv_Ep_on_Np"):
        slope, r2 = fit_power_law(thetas, report.column(key))
        summary[f"slope_{key}"] = slope
        summary[f"r2_{key}"] = r2
    # every CSV row carries the grid extent and the fitted exponents
    for row in report.rows:
        row["xi_max"] = summary["xi_max"]
        for key in ("inv_IplusK", "inv_IplusEN", "inv_Np_on_Ep", "inv_Ep_on_Np"):
            row[f"slope_{key}"] = summary[f"slope_{key}"]
    report.summary = summary
    return report
