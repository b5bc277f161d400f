"""Parametric models, tangent vectors and the SLD dual connections.

A :class:`ParametricModel` maps coordinates ``xi`` to density operators.
Tangent vectors carry both representations: the m-representation
``d rho`` (traceless Hermitian) and the e-representation, the SLD ``L``
with ``rho o L = d rho``.
"""

from __future__ import annotations

import warnings
from functools import cached_property

import numpy as np

from .operators import (
    DensityOperator,
    as_density,
    commutator,
    expectation,
    hermitian,
    hs_norm,
    solve_sld,
    sym_product,
    tensor_power_state,
    to_real,
    MAX_TENSOR_DIM,
)

FD_STEP = 1e-5
COV_STEP = 1e-4
MIN_STEP = 1e-9
EXP_GUARD = 700.0


class DomainError(ValueError):
    pass


class SingularModelError(np.linalg.LinAlgError):
    pass


class DegenerateDirectionWarning(UserWarning):
    pass


class ParametricModel:
    """A smooth family ``xi -> rho_xi`` of strictly positive states.

    Parameters
    ----------
    state_fn : callable
        Maps a length-``n`` array to a ``(d, d)`` density matrix (ndarray or
        :class:`DensityOperator`).
    n : int
        Number of coordinates.
    bounds : sequence of (float, float), optional
        Open interval per coordinate; defaults to the whole real line.
    partials_fn : callable, optional
        Maps ``xi`` to an ``(n, d, d)`` array of ``d rho / d xi^i``. When
        omitted, central finite differences are used.
    constraint : callable, optional
        Extra domain predicate, e.g. ``||xi|| < 1``.
    fd_step : float
        Base finite-difference step; the step on axis ``i`` is
        ``fd_step * max(1, |xi_i|)``.
    name : str, optional
    hilbert_dim : int, optional
        Dimension ``d`` of the states. When omitted it is found by
        evaluating the model at the centre of the coordinate box, which
        must then lie in the domain.
    """

    def __init__(self, state_fn, n, bounds=None, partials_fn=None,
                 constraint=None, fd_step=FD_STEP, name=None, hilbert_dim=None):
        self.state_fn = state_fn
        self.n = int(n)
        if bounds is None:
            bounds = [(-np.inf, np.inf)] * self.n
        self.bounds = np.array(bounds, dtype=float).reshape(self.n, 2)
        self.partials_fn = partials_fn
        self.constraint = constraint
        self.fd_step = float(fd_step)
        self.name = name or "model"
        if hilbert_dim is not None:
            self._probe_dim = int(hilbert_dim)

    def __repr__(self):
        return f"ParametricModel(name={self.name!r}, n={self.n})"

    @property
    def analytic(self):
        return self.partials_fn is not None

    def with_fd_step(self, h):
        """Copy of the model using finite differences with step ``h``."""
        return ParametricModel(self.state_fn, self.n, self.bounds, None,
                               self.constraint, h, self.name, self.dim)

    def in_domain(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.n,) or not np.all(np.isfinite(xi)):
            return False
        if np.any(xi <= self.bounds[:, 0]) or np.any(xi >= self.bounds[:, 1]):
            return False
        return self.constraint is None or bool(self.constraint(xi))

    def _check(self, xi):
        xi = np.asarray(xi, dtype=float)
        if not self.in_domain(xi):
            raise DomainError(f"{xi} is outside the domain of {self.name}")
        return xi

    def _raw(self, xi):
        return np.asarray(self.state_fn(np.asarray(xi, dtype=float)), dtype=complex)

    def state(self, xi):
        xi = self._check(xi)
        rho = self.state_fn(xi)
        return as_density(rho)

    @property
    def dim(self):
        """Hilbert space dimension (probes the model at a domain point)."""
        return self._probe_dim

    @cached_property
    def _probe_dim(self):
        lo = np.where(np.isfinite(self.bounds[:, 0]), self.bounds[:, 0], -1.0)
        hi = np.where(np.isfinite(self.bounds[:, 1]), self.bounds[:, 1], 1.0)
        return self._raw(0.5 * (lo + hi)).shape[0]

    def partials(self, xi):
        """``(n, d, d)`` array of traceless Hermitian ``d rho / d xi^i``."""
        xi = self._check(xi)
        if self.partials_fn is not None:
            parts = np.asarray(self.partials_fn(xi), dtype=complex)
        else:
            parts = []
            for i in range(self.n):
                h = self.fd_step * max(1.0, abs(xi[i]))
                e = np.zeros(self.n)
                e[i] = h
                parts.append((self._raw(xi + e) - self._raw(xi - e)) / (2 * h))
            parts = np.array(parts)
        d = parts.shape[-1]
        out = np.empty_like(parts)
        for i, p in enumerate(parts):
            p = hermitian(p)
            out[i] = p - (np.trace(p).real / d) * np.eye(d)
        return out


class TangentVector:
    """Tangent vector at ``base`` in m- and e-representation.

    Give exactly one of ``m_rep`` or ``sld``; the other is derived
    (``m_rep = base o sld``) on first access and cached.

    Parameters
    ----------
    base : DensityOperator
    m_rep, sld : ndarray, optional
    check : bool
        Validate ``Tr m_rep = 0`` or ``<sld>_base = 0``.
    """

    def __init__(self, base, m_rep=None, sld=None, check=True):
        if (m_rep is None) == (sld is None):
            raise ValueError("give exactly one of m_rep or sld")
        self.base = as_density(base)
        if m_rep is not None:
            m_rep = hermitian(m_rep)
            if check:
                tr = abs(np.trace(m_rep).real)
                if tr > 1e-10 * max(1.0, hs_norm(m_rep)):
                    raise ValueError(f"m-representation has trace {tr:.3e}")
            self.__dict__["m_rep"] = m_rep
        else:
            sld = hermitian(sld)
            if check:
                mean = abs(expectation(self.base, sld))
                if mean > 1e-9 * max(1.0, hs_norm(sld)):
                    raise ValueError(f"SLD has nonzero expectation {mean:.3e}")
            self.__dict__["sld"] = sld

    @cached_property
    def m_rep(self):
        return sym_product(self.base.matrix, self.sld)

    @cached_property
    def sld(self):
        return solve_sld(self.base, self.m_rep)

    def __repr__(self):
        return f"TangentVector(d={self.base.dim}, |m_rep|={hs_norm(self.m_rep):.4g})"


class FisherMatrix:
    """SLD Fisher information matrix ``g_ij = <L_i, L_j>_rho``."""

    def __init__(self, matrix):
        g = np.asarray(matrix, dtype=float)
        g = 0.5 * (g + g.T)
        w = np.linalg.eigvalsh(g)
        if w.size and w[0] <= 1e-12:
            raise SingularModelError(f"Fisher matrix is singular (min eigenvalue {w[0]:.3e})")
        self.matrix = g
        self.inverse = np.linalg.inv(g)
        self.inverse = 0.5 * (self.inverse + self.inverse.T)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"FisherMatrix({self.matrix!r})"


def _check_rank(parts):
    vecs = to_real(parts)
    s = np.linalg.svd(vecs, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-10 * max(s[0], 1e-300):
        raise SingularModelError("partial derivatives are linearly dependent")


def local_frame(model, xi):
    """State, partials and SLDs at ``xi``.

    Returns
    -------
    rho : DensityOperator
    partials : ndarray, shape (n, d, d)
    slds : ndarray, shape (n, d, d)
    """
    rho = model.state(xi)
    parts = model.partials(xi)
    _check_rank(parts)
    slds = np.array([solve_sld(rho, p) for p in parts])
    return rho, parts, slds


def _gram(parts, slds):
    # g_ij = Tr(d_i rho L_j)
    return np.real(np.einsum("iab,jba->ij", parts, slds))


def tangent_basis(model, xi):
    """Coordinate tangent vectors ``d/dxi^i`` at ``xi`` with their SLDs."""
    rho, parts, slds = local_frame(model, xi)
    out = []
    for p, L in zip(parts, slds):
        t = TangentVector(rho, m_rep=p)
        t.__dict__["sld"] = L
        out.append(t)
    return out


def fisher_matrix(model, xi):
    """SLD Fisher information matrix of ``model`` at ``xi``."""
    _, parts, slds = local_frame(model, xi)
    return FisherMatrix(_gram(parts, slds))


def dual_frame(model, xi):
    """State, Fisher matrix and raised SLDs ``L^i = sum_j g^ij L_j``."""
    rho, parts, slds = local_frame(model, xi)
    G = FisherMatrix(_gram(parts, slds))
    raised = np.einsum("ij,jab->iab", G.inverse, slds)
    return rho, G, slds, raised


def e_transport(X, sigma):
    """e-parallel transport: ``L -> L - <L>_sigma``. Path independent."""
    sigma = as_density(sigma)
    L = X.sld
    if L.shape != sigma.matrix.shape:
        raise ValueError("dimension mismatch")
    return TangentVector(sigma, sld=L - expectation(sigma, L) * np.eye(sigma.dim))


def m_transport(X, sigma):
    """m-parallel transport: the m-representation is kept fixed."""
    sigma = as_density(sigma)
    if X.m_rep.shape != sigma.matrix.shape:
        raise ValueError("dimension mismatch")
    return TangentVector(sigma, m_rep=X.m_rep)


def _axis_step(model, xi, i, h):
    e = np.zeros(model.n)
    while h >= MIN_STEP:
        e[i] = h
        if model.in_domain(xi + e) and model.in_domain(xi - e):
            return h, e
        h *= 0.5
    raise DomainError(f"finite-difference step underflow on axis {i} at {xi}")


def _richardson(f, xi, e):
    """Central difference of ``f`` along ``e``, one Richardson step (O(h^4))."""
    h = np.linalg.norm(e)
    d1 = (f(xi + e) - f(xi - e)) / (2 * h)
    d2 = (f(xi + e / 2) - f(xi - e / 2)) / h
    return (4 * d2 - d1) / 3


def _sld_field(model, j):
    def field(x):
        rho = model.state(x)
        return solve_sld(rho, model.partials(x)[j])
    return field


def e_covariant_derivative(model, xi, i, j, h=COV_STEP):
    """Ambient e-covariant derivative of coordinate field ``j`` along ``i``.

    The SLD of the result is ``d_i L_j + g_ij I``, where ``d_i L_j`` is a
    Richardson-extrapolated central difference with base step ``h``.
    """
    xi = model._check(xi)
    _, e = _axis_step(model, xi, i, h)
    rho, parts, slds = local_frame(model, xi)
    dL = _richardson(_sld_field(model, j), xi, e)
    g_ij = float(np.real(np.trace(parts[i] @ slds[j])))
    return TangentVector(rho, sld=dL + g_ij * np.eye(rho.dim), check=False)


def m_covariant_derivative(model, xi, i, j, h=COV_STEP):
    """Ambient m-covariant derivative: m-representation ``d_i d_j rho``."""
    xi = model._check(xi)
    _, e = _axis_step(model, xi, i, h)
    rho = model.state(xi)
    d2 = _richardson(lambda x: model.partials(x)[j], xi, e)
    return TangentVector(rho, m_rep=d2, check=False)


def metric(X, Y):
    """``g(X, Y) = Tr(m_rep(X) L_Y)``."""
    return float(np.real(np.trace(X.m_rep @ Y.sld)))


def torsion(rho, X, Y):
    """Torsion of the SLD e-connection: m-rep ``[[L_X, L_Y], rho] / 4``."""
    rho = as_density(rho)
    for v in (X, Y):
        if v.base is not rho and not np.allclose(v.base.matrix, rho.matrix, atol=1e-12):
            raise ValueError("tangent vector is not based at rho")
    m = 0.25 * commutator(commutator(X.sld, Y.sld), rho.matrix)
    return TangentVector(rho, m_rep=m, check=False)


def e_geodesic(rho0, F, theta):
    """Point ``exp(theta F/2) rho0 exp(theta F/2) / Z`` on the e-geodesic.

    Raises
    ------
    OverflowError
        If ``|theta| * ||F|| > 700``.
    """
    rho0 = as_density(rho0)
    F = hermitian(F)
    w, v = np.linalg.eigh(F)
    if abs(theta) * np.max(np.abs(w)) > EXP_GUARD:
        raise OverflowError("|theta| * ||F|| exceeds the exponential guard")
    if np.ptp(w) <= 1e-12 * max(1.0, np.max(np.abs(w))):
        warnings.warn("F is proportional to the identity; the curve is constant",
                      DegenerateDirectionWarning, stacklevel=2)
    return _sandwich(rho0, theta * w, v)


def _sandwich(rho0, w, v):
    """``exp(S/2) rho0 exp(S/2) / Z`` for ``S = v diag(w) v^H``."""
    s = 0.5 * np.asarray(w)
    # shift the exponent so the largest factor is exp(0); Z absorbs it
    E = (v * np.exp(s - s.max())) @ v.conj().T
    M = E @ rho0.matrix @ E.conj().T
    return DensityOperator(M, normalize=True)


def iid_extension(model, N):
    """Model of ``rho_xi`` tensored ``N`` times, with the same coordinates."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N == 1:
        return model
    d = model.dim
    if d**N > MAX_TENSOR_DIM:
        raise ValueError(f"dimension {d}**{N} exceeds {MAX_TENSOR_DIM}")

    def state_fn(xi):
        return tensor_power_state(model._raw(xi), N)

    def partials_fn(xi):
        rho = np.asarray(model.state(xi))
        out = []
        for p in model.partials(xi):
            acc = np.zeros((d**N, d**N), dtype=complex)
            for t in range(N):
                term = np.ones((1, 1), dtype=complex)
                for s in range(N):
                    term = np.kron(term, p if s == t else rho)
                acc += term
            out.append(acc)
        return np.array(out)

    return ParametricModel(state_fn, model.n, model.bounds, partials_fn,
                           model.constraint, model.fd_step,
                           f"{model.name}^{N}", d**N)


def affine_reparametrize(model, A, b):
    """Same submanifold in coordinates ``eta = A xi + b``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Ainv = np.linalg.inv(A)

    def back(eta):
        return Ainv @ (np.asarray(eta) - b)

    def partials_fn(eta):
        return np.einsum("ji,jab->iab", Ainv, model.partials(back(eta)))

    # image of the box is not a box; the constraint carries the true domain
    return ParametricModel(lambda eta: model.state_fn(back(eta)), model.n, None,
                           partials_fn, lambda eta: model.in_domain(back(eta)),
                           model.fd_step, f"{model.name}@affine", model.dim)


def traceless_basis(d):
    """HS-orthonormal basis of traceless Hermitian ``d x d`` matrices."""
    out = []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out += [s, a]
    for m in range(1, d):
        h = np.zeros((d, d), dtype=complex)
        h[np.arange(m), np.arange(m)] = 1.0
        h[m, m] = -m
        out.append(h / np.sqrt(m * (m + 1)))
    return out


def full_state_model(d):
    """Whole state space in m-affine coordinates ``rho = I/d + sum xi^a T_a``.

    ``T_a`` is :func:`traceless_basis`, so ``xi^a = <T_a>_rho``.
    """
    T = np.array(traceless_basis(d))
    n = d * d - 1

    def state_fn(xi):
        return np.eye(d) / d + np.einsum("a,aij->ij", xi, T)

    def positive(xi):
        return np.linalg.eigvalsh(state_fn(xi))[0] > 1e-10

    return ParametricModel(state_fn, n, [(-1.0, 1.0)] * n, lambda xi: T.copy(),
                           positive, name=f"full(d={d})")
