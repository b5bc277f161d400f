"""Closed-form formulas for a single qubit (d = 2).

States are written ``rho_r = (I + r . sigma) / 2`` with Bloch vector
``|r| < 1``. The functions here serve as exact oracles for the generic
numerical routines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import ParametricModel
from .operators import DensityOperator, as_density, commutator, expectation, sym_product

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.array([SIGMA_X, SIGMA_Y, SIGMA_Z])

BLOCH_MARGIN = 1e-10
SURFACE_MARGIN = 1e-8


def _bloch(r):
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError(f"Bloch vector must have 3 components, got shape {r.shape}")
    if np.linalg.norm(r) > 1 - BLOCH_MARGIN:
        raise ValueError(f"|r| = {np.linalg.norm(r):.12g} is not inside the unit ball")
    return r


def dot_sigma(x):
    """``x . sigma`` for a real 3-vector ``x``."""
    return np.einsum("i,iab->ab", np.asarray(x, dtype=float), PAULI)


def bloch_to_density(r):
    r = _bloch(r)
    return DensityOperator(0.5 * (np.eye(2) + dot_sigma(r)))


def density_to_bloch(rho):
    rho = as_density(rho)
    if rho.dim != 2:
        raise ValueError("density_to_bloch needs a 2x2 state")
    return np.array([expectation(rho, s) for s in PAULI])


def qubit_sld(r, x):
    """SLD of the tangent vector with m-representation ``x . sigma / 2``.

    Returns
    -------
    ell : ndarray, shape (3,)
    lam : float
        The SLD is ``ell . sigma - lam I``.
    """
    r = _bloch(r)
    x = np.asarray(x, dtype=float)
    lam = float(x @ r / (1 - r @ r))
    return x + lam * r, lam


def qubit_fisher(r):
    """Fisher matrix in Bloch coordinates, ``I + r r^T / (1 - |r|^2)``."""
    r = _bloch(r)
    return np.eye(3) + np.outer(r, r) / (1 - r @ r)


def orthonormal_triple(u1, u2=None):
    """Orthonormal ``(u1, u2, v)`` by Gram-Schmidt with one re-orthogonalization.

    Missing directions are completed from the coordinate axes; the
    orientation of the result is not fixed.
    """
    vecs = [np.asarray(u1, dtype=float)]
    if u2 is not None:
        vecs.append(np.asarray(u2, dtype=float))
    out = []
    for cand in vecs + list(np.eye(3)):
        w = cand.copy()
        for _ in range(2):
            for q in out:
                w = w - (q @ w) * q
        nrm = np.linalg.norm(w)
        if nrm > 1e-8 * max(1.0, np.linalg.norm(cand)):
            out.append(w / nrm)
        elif len(out) < len(vecs):
            raise ValueError("input directions are linearly dependent")
        if len(out) == 3:
            break
    return tuple(out)


@dataclass(frozen=True)
class GeodesicParams:
    """Semi-ellipse ``r(xi) = xi u + c sqrt(1 - xi^2) v`` through ``r0``."""

    u: np.ndarray
    v: np.ndarray
    a: float
    b: float
    c: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.u) - 1) > 1e-12 or abs(np.linalg.norm(self.v) - 1) > 1e-12:
            raise ValueError("u and v must be unit vectors")
        if abs(self.u @ self.v) > 1e-12:
            raise ValueError("u and v must be orthogonal")
        if not abs(self.c) < 1:
            raise ValueError("|c| must be < 1")


def geodesic_params(r0, u):
    """Parameters of the e-geodesic through ``r0`` generated by ``u . sigma``.

    ``v`` is the normalized component of ``r0`` orthogonal to ``u``; when
    that component vanishes any unit vector orthogonal to ``u`` is used.
    """
    r0 = _bloch(r0)
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    a = float(r0 @ u)
    perp = r0 - a * u
    if np.linalg.norm(perp) > 1e-14:
        _, v, _ = orthonormal_triple(u, perp)
    else:
        _, v, _ = orthonormal_triple(u)
    b = float(r0 @ v)
    return GeodesicParams(u, v, a, b, b / np.sqrt(1 - a * a))


def qubit_geodesic_point(params, xi):
    if not abs(xi) < 1:
        raise ValueError("|xi| must be < 1")
    return xi * params.u + params.c * np.sqrt(1 - xi * xi) * params.v


def xi_to_theta(a, xi):
    """e-affine parameter ``theta`` of the geodesic point with ``<u.sigma> = xi``."""
    return 0.5 * np.log((1 - a) * (1 + xi) / ((1 + a) * (1 - xi)))


def theta_to_xi(a, theta):
    """Inverse of :func:`xi_to_theta`."""
    # (1 + xi)/(1 - xi) = k  =>  xi = tanh(log(k)/2)
    return np.tanh(theta + np.arctanh(a))


def qubit_autoparallel_surface_point(u1, u2, v, c, xi):
    """Point ``xi1 u1 + xi2 u2 + c sqrt(1 - |xi|^2) v`` of a semi-ellipsoid."""
    U = np.array([u1, u2, v], dtype=float)
    if np.max(np.abs(U @ U.T - np.eye(3))) > 1e-12:
        raise ValueError("(u1, u2, v) must be orthonormal")
    if not abs(c) < 1:
        raise ValueError("|c| must be < 1")
    xi = np.asarray(xi, dtype=float)
    s = xi @ xi
    if s >= 1 - SURFACE_MARGIN:
        raise ValueError("|xi| must be < 1")
    return xi[0] * U[0] + xi[1] * U[1] + c * np.sqrt(1 - s) * U[2]


def qubit_torsion_identity_residual(rho, A, B):
    """HS norm of the defect in the qubit identity for ``[[A, B], rho] / 2``.

    The right-hand side is
    ``(TrA - 2<A>)(rho o B) - (TrB - 2<B>)(rho o A) + (TrB <A> - TrA <B>) rho``.
    """
    rho = as_density(rho)
    if rho.dim != 2:
        raise ValueError("the identity holds for 2x2 states only")
    r = rho.matrix
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    ta, tb = np.trace(A).real, np.trace(B).real
    ea, eb = expectation(rho, A), expectation(rho, B)
    lhs = 0.5 * commutator(commutator(A, B), r)
    rhs = ((ta - 2 * ea) * sym_product(r, B) - (tb - 2 * eb) * sym_product(r, A)
           + (tb * ea - ta * eb) * r)
    return float(np.linalg.norm(lhs - rhs))


# -- catalog models -----------------------------------------------------------

def bloch_model():
    """Full qubit manifold in Bloch coordinates (m-affine)."""
    half = PAULI / 2

    return ParametricModel(
        lambda r: 0.5 * (np.eye(2) + dot_sigma(r)), 3, [(-1.0, 1.0)] * 3,
        lambda r: half.copy(), lambda r: r @ r < 1 - BLOCH_MARGIN, name="bloch-full")


def bloch_ellipsoid_model(c, u1=(1, 0, 0), u2=(0, 1, 0), v=(0, 0, 1)):
    """Semi-ellipsoid surface with coordinates ``xi^i = <u_i . sigma>``."""
    U = np.array([u1, u2, v], dtype=float)
    u1, u2, v = U
    if np.max(np.abs(U @ U.T - np.eye(3))) > 1e-12:
        raise ValueError("(u1, u2, v) must be orthonormal")

    def state(xi):
        return 0.5 * (np.eye(2) + dot_sigma(qubit_autoparallel_surface_point(u1, u2, v, c, xi)))

    def partials(xi):
        alpha = np.sqrt(1 - xi @ xi)
        return np.array([0.5 * dot_sigma(U[i] - c * xi[i] / alpha * v) for i in range(2)])

    return ParametricModel(state, 2, [(-1.0, 1.0)] * 2, partials,
                           lambda xi: xi @ xi < 1 - SURFACE_MARGIN,
                           name=f"bloch-ellipsoid(c={c})")


def bloch_geodesic_model(a=0.0, c=0.0, u=(0, 0, 1), v=(1, 0, 0), param="xi"):
    """One-dimensional e-geodesic; ``param`` is ``"xi"`` (m-affine) or ``"theta"``."""
    u, v = orthonormal_triple(u, v)[:2]
    if not abs(c) < 1 or not abs(a) < 1:
        raise ValueError("|a| and |c| must be < 1")

    def point(xi):
        return xi * u + c * np.sqrt(1 - xi * xi) * v

    def dpoint(xi):
        return u - c * xi / np.sqrt(1 - xi * xi) * v

    if param == "xi":
        return ParametricModel(
            lambda x: 0.5 * (np.eye(2) + dot_sigma(point(x[0]))), 1, [(-1.0, 1.0)],
            lambda x: np.array([0.5 * dot_sigma(dpoint(x[0]))]),
            name=f"bloch-geodesic(a={a},c={c})")
    if param == "theta":
        def to_xi(t):
            return theta_to_xi(a, t[0])

        def partials(t):
            xi = to_xi(t)
            # dxi/dtheta = 1 - xi^2
            return np.array([0.5 * (1 - xi * xi) * dot_sigma(dpoint(xi))])

        return ParametricModel(
            lambda t: 0.5 * (np.eye(2) + dot_sigma(point(to_xi(t)))), 1, [(-15.0, 15.0)],
            partials, name=f"bloch-geodesic(a={a},c={c},param=theta)")
    raise ValueError(f"unknown parametrization {param!r}")


def latitude_band_model(radius=0.8, theta_range=(0.6, 2.4), phi_range=(-2.0, 2.0)):
    """Patch of the sphere ``|r| = radius`` in polar/azimuthal angles.

    A fixed-radius sphere is not of semi-ellipsoid type, so this model is
    not e-autoparallel; it is the negative control.
    """
    if not 0 < radius < 1:
        raise ValueError("radius must be in (0, 1)")

    def point(x):
        t, p = x
        return radius * np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])

    def partials(x):
        t, p = x
        dt = radius * np.array([np.cos(t) * np.cos(p), np.cos(t) * np.sin(p), -np.sin(t)])
        dp = radius * np.array([-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), 0.0])
        return np.array([0.5 * dot_sigma(dt), 0.5 * dot_sigma(dp)])

    return ParametricModel(lambda x: 0.5 * (np.eye(2) + dot_sigma(point(x))), 2,
                           [theta_range, phi_range], partials,
                           name=f"latitude-band(radius={radius})")
