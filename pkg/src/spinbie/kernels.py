"""Fundamental solutions of the Helmholtz and Dirac equations, and exact Dirac fields.

Conventions
-----------
Three dimensions, ``R = |x|``::

    Phi_k(x) = -exp(i k R) / (4 pi R)
    Psi_k(x) = (D - i k) Phi_k = (-x/R**2 + i k (x/R - 1)) Phi_k

so that ``Psi_k`` has a scalar part ``i k exp(i k R)/(4 pi R)`` in addition to
its vector part, and ``Psi_0(x) = x / (4 pi R**3)``.  In the plane only the
static kernel ``Psi_0(x) = x / (2 pi |x|**2)`` is provided.

A field ``x -> Psi_k(s - x) m`` solves ``D f = i k f`` away from ``s`` and is
outgoing; it is the basic manufactured solution used throughout the tests.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import clifford as cl

__all__ = [
    "check_wavenumber",
    "phi3",
    "psi3",
    "psi3_vector_parts",
    "as_complex_points",
    "psi2_static",
    "psi2_static_mv",
    "dipole_field",
    "maxwell_dipole",
    "maxwell_plane_wave",
    "dirac_plane_wave",
    "pack_maxwell",
    "unpack_maxwell",
]

FOUR_PI = 4.0 * np.pi


def check_wavenumber(k) -> complex:
    k = complex(k)
    if k.imag < 0:
        raise ValueError(f"wave number must satisfy Im k >= 0, got {k}")
    return k


def _radius(x: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ValueError("kernel evaluated at its singular point")
    return r


def phi3(k, x) -> np.ndarray:
    """Outgoing Helmholtz fundamental solution ``-exp(ikR)/(4 pi R)``."""
    k = check_wavenumber(k)
    r = _radius(np.asarray(x, dtype=float))
    return -np.exp(1j * k * r) / (FOUR_PI * r)


def psi3_vector_parts(k, x):
    """Scalar and vector parts of ``Psi_k(x)``.

    Returns
    -------
    scalar : ndarray, shape (...)
    vec : ndarray, shape (..., 3)
    """
    k = check_wavenumber(k)
    x = np.asarray(x, dtype=float)
    r = _radius(x)
    e = np.exp(1j * k * r)
    phi = -e / (FOUR_PI * r)
    scalar = -1j * k * phi
    vec = ((-1.0 / r**2 + 1j * k / r) * phi)[..., None] * x
    return scalar, vec


def psi3(k, x) -> np.ndarray:
    """``Psi_k(x)`` as coefficient arrays of shape ``(..., 8)``."""
    scalar, vec = psi3_vector_parts(k, x)
    out = np.zeros(scalar.shape + (8,), dtype=complex)
    out[..., 0] = scalar
    out[..., 1:4] = vec
    return out


def as_complex_points(x) -> np.ndarray:
    """Planar points given either as complex numbers or as ``(..., 2)`` reals."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x
    return x[..., 0] + 1j * x[..., 1]


def psi2_static(x) -> np.ndarray:
    """Planar static kernel ``x / (2 pi |x|^2)`` with points as complex numbers."""
    x = np.asarray(x, dtype=complex)
    if np.any(x == 0):
        raise ValueError("kernel evaluated at its singular point")
    return 1.0 / (2 * np.pi * np.conj(x))


def psi2_static_mv(x) -> np.ndarray:
    """Planar static kernel as coefficient arrays of shape ``(..., 4)``."""
    v = psi2_static(x)
    out = np.zeros(v.shape + (4,), dtype=complex)
    out[..., 1] = v.real
    out[..., 2] = v.imag
    return out


def dipole_field(k, source, moment) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``x -> Psi_k(source - x) * moment`` (Clifford product on the right).

    Works in the plane (``k = 0``, points as complex numbers or 2-vectors) and
    in space.  The field solves the Dirac equation ``D f = i k f`` away from
    the source and is outgoing at infinity.
    """
    m = np.asarray(moment.coeffs if isinstance(moment, cl.Multivector) else moment, dtype=complex)
    if m.shape[-1] == 4:
        if complex(k) != 0:
            raise ValueError("planar kernels are static only")
        s = complex(source[0], source[1]) if np.ndim(source) else complex(source)

        def field2(x):
            return cl.clifford_mul(psi2_static_mv(s - as_complex_points(x)), m)

        return field2
    src = np.asarray(source, dtype=float)
    k = check_wavenumber(k)

    def field3(x):
        x = np.asarray(x, dtype=float)
        return cl.clifford_mul(psi3(k, src - x), m)

    return field3


def pack_maxwell(e_field: np.ndarray, h_field: np.ndarray) -> np.ndarray:
    """Pack electric and magnetic vectors as ``F = E + *H``."""
    return cl.vector(e_field) + cl.hodge_star(cl.vector(h_field))


def unpack_maxwell(f: np.ndarray):
    """Inverse of :func:`pack_maxwell` on the vector and bivector parts."""
    e_field = f[..., 1:4]
    h_field = cl.hodge_star(cl.grade(f, 2))[..., 1:4]
    return e_field, h_field


def maxwell_dipole(k, source, moment) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Radiating electric dipole solving ``curl E = ik H``, ``curl H = -ik E``.

    With ``G = Phi_k`` and ``r = x - source``::

        H = curl(G p)
        E = (i/k) curl H = (i/k) (k^2 G p + grad div (G p))

    Returns a callable giving ``(E, H)`` at points of shape ``(..., 3)``.
    """
    k = check_wavenumber(k)
    if k == 0:
        raise ValueError("the Maxwell dipole needs k != 0")
    src = np.asarray(source, dtype=float)
    p = np.asarray(moment, dtype=complex)

    def fields(x):
        r = np.asarray(x, dtype=float) - src
        rad = _radius(r)
        rh = r / rad[..., None]
        g = -np.exp(1j * k * rad) / (FOUR_PI * rad)
        a = 1j * k - 1.0 / rad
        g1 = g * a
        g2 = g * (a**2 + 1.0 / rad**2)
        rp = np.einsum("...i,i->...", rh, p)
        h = g1[..., None] * np.cross(rh, p)
        e = (1j / k) * (
            (k**2 * g)[..., None] * p
            + g2[..., None] * rh * rp[..., None]
            + (g1 / rad)[..., None] * (p - rh * rp[..., None])
        )
        return e, h

    return fields


def maxwell_plane_wave(k, direction, polarization) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Plane wave ``E = p exp(ik d.x)``, ``H = d x E`` with ``d . p = 0``."""
    k = check_wavenumber(k)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    p = np.asarray(polarization, dtype=complex)
    if abs(np.dot(d, p)) > 1e-12 * np.linalg.norm(p):
        raise ValueError("polarization must be orthogonal to the propagation direction")

    def fields(x):
        ph = np.exp(1j * k * (np.asarray(x, dtype=float) @ d))[..., None]
        return p * ph, np.cross(d, p) * ph

    return fields


def dirac_plane_wave(k, direction, moment=None) -> Callable[[np.ndarray], np.ndarray]:
    """Entire Dirac solution ``exp(ik d.x) (1 + d) m`` of ``D f = ik f``."""
    k = check_wavenumber(k)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    left = cl.vector(d)
    left[0] = 1.0
    m = np.zeros(8, dtype=complex)
    m[0] = 1.0
    if moment is not None:
        m = np.asarray(moment.coeffs if isinstance(moment, cl.Multivector) else moment, dtype=complex)
    amp = cl.clifford_mul(left, m)

    def field(x):
        ph = np.exp(1j * k * (np.asarray(x, dtype=float) @ d))
        return ph[..., None] * amp

    return field
