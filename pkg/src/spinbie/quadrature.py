"""Panel integrals of the three-dimensional Dirac kernel over flat triangles.

For a target point ``x`` and a triangle ``T`` the quantity computed is::

    P(x, T) = integral over T of Psi_k(y - x) dsigma(y)

returned as four complex components (scalar, e1, e2, e3).  Three regimes are
used, chosen from the distance between target and panel centroid relative to
the panel diameter:

* far: centroid rule (one point)
* intermediate: seven-point degree-5 rule
* near and self: polar coordinates about the projection of ``x`` onto the
  panel plane.  The static part is integrated in closed form in the radial
  direction and the angular integral uses a sinh substitution along each edge,
  which removes the near-singularity when the projection is close to an edge.
  The oscillatory remainder ``Psi_k - Psi_0`` is integrated with Gauss-Legendre
  in the radial direction, except for its scalar part which also has a closed
  form.

When the target lies in the panel plane inside the panel (the self term) the
static tangential part is the Cauchy principal value and the normal part is
zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["QuadratureOptions", "panel_integrals", "expm_remainder"]

FOUR_PI = 4.0 * np.pi

# Dunavant degree-5 rule on the reference triangle: barycentric coordinates, weights
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY7 = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_W7 = np.array([0.225, *[0.132394152788506] * 3, *[0.125939180544827] * 3])


@dataclass(frozen=True)
class QuadratureOptions:
    """Switching radii (in panel diameters) and point counts."""

    near_radius: float = 1.6
    mid_radius: float = 4.0
    angular_points: int = 16
    radial_points: int = 8
    chunk: int = 256


def expm_remainder(t: np.ndarray) -> np.ndarray:
    """``exp(it)(1 - it) - 1`` without cancellation for small ``|t|``."""
    t = np.asarray(t, dtype=complex)
    out = np.exp(1j * t) * (1 - 1j * t) - 1
    small = np.abs(t) < 0.05
    if np.any(small):
        ts = t[small]
        acc = np.zeros_like(ts)
        term = np.ones_like(ts)
        fact = 1.0
        for n in range(1, 12):
            term = term * (1j * ts)
            fact *= n
            if n >= 2:
                acc += term * (1 - n) / fact
        out[small] = acc
    return out


def _psi_parts(k: complex, r: np.ndarray):
    """Scalar and vector parts of Psi_k at difference vectors ``r`` (..., 3)."""
    rad = np.linalg.norm(r, axis=-1)
    e = np.exp(1j * k * rad)
    phi = -e / (FOUR_PI * rad)
    scalar = -1j * k * phi
    vec = ((-1.0 / rad**2 + 1j * k / rad) * phi)[..., None] * r
    return scalar, vec


def _rule_integrals(k, targets, corners, areas, bary, wts):
    """Fixed-rule integrals for matched target/panel pairs (P, 3), (P, 3, 3)."""
    pts = np.einsum("qa,pad->pqd", bary, corners)
    sc, vec = _psi_parts(k, pts - targets[:, None, :])
    out = np.empty((targets.shape[0], 4), dtype=complex)
    out[:, 0] = (sc @ wts) * areas
    out[:, 1:] = np.einsum("pqd,q->pd", vec, wts) * areas[:, None]
    return out


def _polar_integrals(k, targets, corners, normals, n_ang, n_rad, inplane_tol):
    """Near-singular and singular panel integrals for matched pairs."""
    npairs = targets.shape[0]
    out = np.zeros((npairs, 4), dtype=complex)
    height = np.einsum("pd,pd->p", targets - corners[:, 0], normals)
    foot = targets - height[:, None] * normals
    diam = np.max(np.linalg.norm(corners - np.roll(corners, 1, axis=1), axis=2), axis=1)
    inplane = np.abs(height) <= inplane_tol * diam
    hd = np.where(inplane, 0.0, height)
    absd = np.abs(hd)
    xg, wg = np.polynomial.legendre.leggauss(n_ang)
    rg, rw = np.polynomial.legendre.leggauss(n_rad)
    rg, rw = 0.5 * (rg + 1), 0.5 * rw
    # quadratic grading towards the foot point resolves the scale |d|
    rw = 2 * rg * rw
    rg = rg**2
    for e in range(3):
        a = corners[:, e]
        b = corners[:, (e + 1) % 3]
        edge = b - a
        elen = np.linalg.norm(edge, axis=1)
        tdir = edge / elen[:, None]
        s_a = -np.einsum("pd,pd->p", foot - a, tdir)
        fpt = a + (-s_a)[:, None] * tdir  # foot of the perpendicular on the edge line
        perp = fpt - foot
        h = np.linalg.norm(perp, axis=1)
        sign = np.sign(np.einsum("pd,pd->p", np.cross(perp, tdir), normals))
        ok = h > 1e-12 * diam
        if not np.any(ok):
            continue
        hh = np.where(ok, h, 1.0)
        mu_a = np.arcsinh(s_a / hh)
        mu_b = np.arcsinh((s_a + elen) / hh)
        half = 0.5 * (mu_b - mu_a)
        mu = 0.5 * (mu_a + mu_b)[:, None] + half[:, None] * xg[None, :]
        wmu = half[:, None] * wg[None, :] / np.cosh(mu)  # d(phi) = d(mu)/cosh(mu)
        svals = hh[:, None] * np.sinh(mu)
        rho_max = hh[:, None] * np.cosh(mu)
        # unit in-plane direction from the foot of the target
        u = (perp[:, None, :] + svals[..., None] * tdir[:, None, :]) / rho_max[..., None]
        dd = hd[:, None]
        ad = absd[:, None]
        dist_max = np.sqrt(rho_max**2 + dd**2)
        # static tangential radial integral, with the log|d| term dropped in-plane
        with np.errstate(divide="ignore", invalid="ignore"):
            tang = np.where(
                inplane[:, None],
                np.log(2 * rho_max) - 1.0,
                np.arcsinh(rho_max / np.where(ad > 0, ad, 1.0)) - rho_max / dist_max,
            )
        norm_part = np.sign(dd) - dd / dist_max
        w = wmu * (sign * ok)[:, None] / FOUR_PI
        static_vec = np.einsum("pq,pqd->pd", w * tang, u) - np.einsum("pq,pd->pd", w * norm_part, normals)
        out[:, 1:] += static_vec
        if k != 0:
            out[:, 0] += np.sum(w * (np.exp(1j * k * dist_max) - np.exp(1j * k * ad)), axis=1)
            # oscillatory vector remainder, Gauss in the radial variable
            rho = rho_max[..., None] * rg  # (P, Q, R)
            dist = np.sqrt(rho**2 + dd[..., None] ** 2)
            fac = expm_remainder(k * dist) / dist**3 * rho * rw * rho_max[..., None]
            radial_u = np.sum(fac * rho, axis=2)  # multiplies u
            radial_n = np.sum(fac, axis=2) * dd  # multiplies -n
            out[:, 1:] += np.einsum("pq,pqd->pd", w * radial_u, u) - np.einsum("pq,pd->pd", w * radial_n, normals)
    return out


def panel_integrals(surface, k, targets=None, self_panels=None, options: QuadratureOptions | None = None) -> np.ndarray:
    """Integrals of ``Psi_k(y - x)`` over every panel for every target.

    Parameters
    ----------
    surface : Surface3D
    k : complex
        Wave number with ``Im k >= 0``.
    targets : ndarray, shape (T, 3), optional
        Defaults to the panel centroids (collocation).
    self_panels : ndarray of int, shape (T,), optional
        Panel index containing each target, or -1.  Defaults to the identity
        when ``targets`` is omitted.
    options : QuadratureOptions

    Returns
    -------
    ndarray, shape (4, T, M)
        Scalar, e1, e2, e3 components.
    """
    opts = options or QuadratureOptions()
    k = complex(k)
    if k.imag < 0:
        raise ValueError("Im k must be nonnegative")
    cent = surface.centroids
    if targets is None:
        targets = cent
        self_panels = np.arange(surface.size)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if self_panels is None:
        self_panels = np.full(len(targets), -1)
    corners = surface.corners
    areas = surface.areas
    normals = surface.normals
    diam = surface.diameters
    nt, m = len(targets), surface.size
    out = np.empty((4, nt, m), dtype=complex)
    mid_i, mid_j, near_i, near_j = [], [], [], []
    for lo in range(0, nt, opts.chunk):
        hi = min(nt, lo + opts.chunk)
        r = cent[None, :, :] - targets[lo:hi, None, :]
        dist = np.linalg.norm(r, axis=2)
        ratio = dist / diam[None, :]
        is_self = self_panels[lo:hi, None] == np.arange(m)[None, :]
        near = (ratio < opts.near_radius) | is_self
        mid = (ratio < opts.mid_radius) & ~near
        safe = np.where(near | mid, 1.0, 0.0)[..., None] * np.array([1.0, 0, 0]) + r * (~(near | mid))[..., None]
        sc, vec = _psi_parts(k, safe)
        out[0, lo:hi] = sc * areas
        out[1:, lo:hi] = np.moveaxis(vec * areas[None, :, None], 2, 0)
        ii, jj = np.nonzero(mid)
        mid_i.append(ii + lo)
        mid_j.append(jj)
        ii, jj = np.nonzero(near)
        near_i.append(ii + lo)
        near_j.append(jj)
    mi, mj = np.concatenate(mid_i), np.concatenate(mid_j)
    ni, nj = np.concatenate(near_i), np.concatenate(near_j)
    step = 20000
    for lo in range(0, len(mi), step):
        a, b = mi[lo : lo + step], mj[lo : lo + step]
        out[:, a, b] = _rule_integrals(k, targets[a], corners[b], areas[b], _BARY7, _W7).T
    for lo in range(0, len(ni), step // 4):
        a, b = ni[lo : lo + step // 4], nj[lo : lo + step // 4]
        out[:, a, b] = _polar_integrals(
            k, targets[a], corners[b], normals[b], opts.angular_points, opts.radial_points, 1e-10
        ).T
    logger.debug("panel integrals: %d targets, %d panels, %d mid, %d near", nt, m, len(mi), len(ni))
    return out
