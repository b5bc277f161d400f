"""Estimators, Cramér-Rao gaps and efficient filtrations.

An estimator is a finite POVM ``{pi_w}`` together with an outcome map
``w -> f(w)`` in ``R^n``. Its moments at a state follow from the outcome
probabilities ``Tr(rho pi_w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoparallel import parallel_field_dimension
from .manifold import dual_frame
from .operators import as_density, expectation, hermitian, hs_norm

COMPLETENESS_TOL = 1e-10
PSD_FLOOR = -1e-12
CLUSTER_TOL = 1e-9
DEFAULT_EPS = (0.2, 0.1, 0.05, 0.02, 0.01)


class NotUnbiasedError(ValueError):
    pass


class DiscreteEstimator:
    """Finite POVM with real vector outcomes.

    Parameters
    ----------
    elements : sequence of ndarray, shape (d, d)
        Positive semidefinite operators summing to the identity.
    values : array_like, shape (m, n)
        Outcome vector for each element.
    """

    def __init__(self, elements, values):
        self.elements = np.array([hermitian(e) for e in elements])
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] != len(self.elements):
            if len(self.elements) == 1 and self.values.shape[0] != 1:
                self.values = self.values.reshape(1, -1)
            else:
                raise ValueError("need one value vector per POVM element")
        d = self.elements.shape[-1]
        defect = hs_norm(self.elements.sum(axis=0) - np.eye(d))
        if defect > COMPLETENESS_TOL:
            raise ValueError(f"POVM elements sum to I only within {defect:.3e}")
        for k, e in enumerate(self.elements):
            if np.linalg.eigvalsh(e)[0] < PSD_FLOOR:
                raise ValueError(f"POVM element {k} is not positive semidefinite")

    @property
    def dim(self):
        return self.elements.shape[-1]

    @property
    def n(self):
        return self.values.shape[1]

    def __len__(self):
        return len(self.elements)

    def observables(self):
        """``A^i = sum_w f^i(w) pi_w``, shape ``(n, d, d)``."""
        return np.einsum("wi,wab->iab", self.values, self.elements)

    def probabilities(self, rho):
        rho = as_density(rho)
        if rho.dim != self.dim:
            raise ValueError("state and POVM dimensions differ")
        p = np.real(np.einsum("ab,wba->w", rho.matrix, self.elements))
        if p.min() < PSD_FLOOR:
            raise ValueError("negative outcome probability")
        p = np.clip(p, 0.0, None)
        return p / p.sum()

    def __repr__(self):
        return f"DiscreteEstimator(outcomes={len(self)}, d={self.dim}, n={self.n})"


def estimator_moments(rho, Pi, xi_true):
    """Mean ``E`` and mean squared error matrix ``V`` about ``xi_true``."""
    p = Pi.probabilities(rho)
    xi_true = np.asarray(xi_true, dtype=float)
    E = p @ Pi.values
    dev = Pi.values - xi_true
    V = (dev * p[:, None]).T @ dev
    return E, 0.5 * (V + V.T)


def unbiasedness_defect(model, xi, Pi):
    """Largest violation of ``<A^i> = xi^i`` and ``<A^i, L_j> = delta_ij``."""
    xi = np.asarray(xi, dtype=float)
    rho, _, slds, _ = dual_frame(model, xi)
    A = Pi.observables()
    means = np.array([expectation(rho, a) for a in A])
    # <A, L>_rho = Re Tr(rho A L)
    cross = np.real(np.einsum("ab,ibc,jca->ij", rho.matrix, A, slds))
    return float(max(np.max(np.abs(means - xi)), np.max(np.abs(cross - np.eye(len(xi))))))


def check_locally_unbiased(model, xi, Pi, tol=1e-9):
    return unbiasedness_defect(model, xi, Pi) <= tol


def cr_gap(model, xi, Pi, tol=1e-8):
    """``V - G^{-1}`` for an estimator that is locally unbiased at ``xi``."""
    defect = unbiasedness_defect(model, xi, Pi)
    if defect > tol:
        raise NotUnbiasedError(f"estimator is not locally unbiased (defect {defect:.3e})")
    rho, G, _, _ = dual_frame(model, xi)
    _, V = estimator_moments(rho, Pi, xi)
    return V - G.inverse


def spectral_decomposition(X, rel_tol=CLUSTER_TOL):
    """Distinct eigenvalues and eigenprojectors of Hermitian ``X``.

    Eigenvalues closer than ``rel_tol * max|eig|`` are merged; the merged
    value is the cluster mean.
    """
    w, v = np.linalg.eigh(hermitian(X))
    scale = max(np.max(np.abs(w)), 1e-300)
    groups = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[groups[-1][-1]] <= rel_tol * scale:
            groups[-1].append(k)
        else:
            groups.append([k])
    vals = np.array([w[g].mean() for g in groups])
    projs = np.array([v[:, g] @ v[:, g].conj().T for g in groups])
    return vals, projs


def _check_basis(U):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[0] != U.shape[1]:
        raise ValueError("u_basis must be square")
    if np.linalg.cond(U) >= 1e8:
        raise ValueError("u_basis is singular or ill-conditioned")
    return U, np.linalg.inv(U)


def build_local_random_estimator(model, xi, u_basis, probs, gamma=None):
    """Randomized estimator that is locally unbiased at ``xi``.

    With probability ``p_k`` the observable ``X^k = sum_i u^k_i L^i`` is
    measured; outcome ``x`` is mapped to ``f^i = gamma_k^i + w^i_k x / p_k``
    where ``W = U^{-1}``.

    Parameters
    ----------
    u_basis : ndarray, shape (n, n)
        Rows are the vectors ``u^k``.
    probs : ndarray, shape (n,)
    gamma : ndarray, shape (n, n), optional
        Row ``k`` is ``gamma_k``; must satisfy ``sum_k p_k gamma_k = xi``.
        Defaults to ``gamma_k = xi`` for all ``k``.
    """
    xi = np.asarray(xi, dtype=float)
    U, W = _check_basis(u_basis)
    n = len(xi)
    p = np.asarray(probs, dtype=float)
    if p.shape != (n,) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("probs must be n positive numbers summing to 1")
    gamma = np.tile(xi, (n, 1)) if gamma is None else np.asarray(gamma, dtype=float)
    if np.max(np.abs(p @ gamma - xi)) > 1e-10:
        raise ValueError("gamma violates sum_k p_k gamma_k = xi")
    _, _, _, raised = dual_frame(model, xi)
    elements, values = [], []
    for k in range(n):
        X = np.einsum("i,iab->ab", U[k], raised)
        for x, proj in zip(*spectral_decomposition(X)):
            elements.append(p[k] * proj)
            values.append(gamma[k] + W[:, k] * x / p[k])
    return DiscreteEstimator(elements, values)


def local_random_variance(G_inv, u_basis, probs, gamma, xi):
    """Predicted ``u^kT V u^k`` for :func:`build_local_random_estimator`.

    ``(1/p_k) u^kT G^{-1} u^k + sum_l p_l (a_l^k)^2`` with
    ``a_l^k = u^k . (gamma_l - xi)``.
    """
    U = np.atleast_2d(np.asarray(u_basis, dtype=float))
    p = np.asarray(probs, dtype=float)
    a = (np.asarray(gamma, dtype=float) - xi) @ U.T  # a[l, k]
    quad = np.einsum("ki,ij,kj->k", U, G_inv, U)
    return quad / p + p @ a**2


def complete_basis(u):
    """Invertible ``n x n`` matrix whose first row is ``u``."""
    u = np.asarray(u, dtype=float)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(len(u))]))
    return np.vstack([u, q[:, 1:len(u)].T])


@dataclass
class FiltrationSpec:
    """Inputs of the efficient filtration.

    Attributes
    ----------
    F_ops : list of ndarray
        Observables with ``xi^i = <F^i>``, e.g. an autoparallel certificate.
    u_basis : ndarray, shape (n, n)
        Rows ``u^k``; ``u^1`` receives probability ``1 - eps``.
    eps_schedule : sequence of float
        Strictly decreasing values in ``(0, 1)``.
    model : ParametricModel, optional
    """

    F_ops: list
    u_basis: np.ndarray = None
    eps_schedule: tuple = DEFAULT_EPS
    model: object = field(default=None, repr=False)

    def __post_init__(self):
        self.F_ops = [hermitian(f) for f in self.F_ops]
        n = len(self.F_ops)
        if self.u_basis is None:
            self.u_basis = np.eye(n)
        self.u_basis, self.w_basis = _check_basis(self.u_basis)
        if self.u_basis.shape[0] != n:
            raise ValueError("u_basis size does not match the number of observables")
        eps = np.asarray(self.eps_schedule, dtype=float)
        if np.any(eps <= 0) or np.any(eps >= 1) or np.any(np.diff(eps) >= 0):
            raise ValueError("eps_schedule must be strictly decreasing in (0, 1)")
        self.eps_schedule = tuple(float(e) for e in eps)


def filtration_probs(eps, n):
    """``p_1 = 1 - eps`` and the rest split evenly; ``p_1 = 1`` when ``n = 1``."""
    if n == 1:
        return np.ones(1)
    return np.concatenate([[1 - eps], np.full(n - 1, eps / (n - 1))])


def filtration_estimator(spec, eps):
    """State-independent estimator of the filtration at one ``eps``."""
    U, W = spec.u_basis, spec.w_basis
    n = len(U)
    p = filtration_probs(eps, n)
    F = np.array(spec.F_ops)
    elements, values = [], []
    for k in range(n):
        Y = np.einsum("i,iab->ab", U[k], F)
        for y, proj in zip(*spectral_decomposition(Y)):
            elements.append(p[k] * proj)
            values.append(W[:, k] * y / p[k])
    return DiscreteEstimator(elements, values)


def build_filtration(spec):
    """One estimator per ``eps`` in the schedule."""
    return [filtration_estimator(spec, e) for e in spec.eps_schedule]


def filtration_variance(G_inv, u, xi, p):
    """Predicted ``uT V u`` when ``u . sigma``-direction is measured with probability ``p``.

    Equals ``uT G^{-1} u / p + (1 - p)/p (u . xi)^2``; with ``p = 1 - eps``
    this is ``uT G^{-1} u / (1 - eps) + eps/(1 - eps) (u . xi)^2``.
    """
    u = np.asarray(u, dtype=float)
    m = u @ np.asarray(xi, dtype=float)
    return (u @ G_inv @ u) / p + (1 - p) / p * m * m


def extrapolate_limit(eps, values):
    """Two-point fit of ``values = A / (1 - eps) + B eps / (1 - eps)``; returns ``A``.

    Uses the two smallest ``eps``; ``A`` is the ``eps -> 0`` limit.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = np.argsort(eps)[:2]
    M = np.column_stack([1 / (1 - eps[idx]), eps[idx] / (1 - eps[idx])])
    return float(np.linalg.solve(M, values[idx])[0])


def observable_variance(rho, F):
    """``<F^2>_rho - <F>_rho^2``."""
    rho = as_density(rho)
    F = hermitian(F)
    m = expectation(rho, F)
    return expectation(rho, F @ F) - m * m


def scalar_efficient_estimator(model, xi, f_value, grad_f):
    """Observable ``F = f I + sum_i d_i f L^i`` whose spectral measure is efficient.

    Its variance at ``rho_xi`` is ``grad_f^T G^{-1} grad_f``.
    """
    _, _, _, raised = dual_frame(model, xi)
    grad_f = np.asarray(grad_f, dtype=float)
    d = raised.shape[-1]
    return f_value * np.eye(d) + np.einsum("i,iab->ab", grad_f, raised)


def scalar_cr_bound(model, xi, grad_f):
    """``grad_f^T G^{-1} grad_f``."""
    _, G, _, _ = dual_frame(model, xi)
    grad_f = np.asarray(grad_f, dtype=float)
    return float(grad_f @ G.inverse @ grad_f)


def efficient_function_space_dim(model, samples, tol=1e-8):
    """Dimension of the space of efficiently estimable expectation functions."""
    return parallel_field_dimension(model, samples, tol) + 1


def weighted_variance(V, W):
    """``Tr(W V)`` for a constant weight matrix ``W``."""
    return float(np.trace(np.asarray(W) @ np.asarray(V)))


# -- random estimators ----------------------------------------------------------

def random_povm(d, m, rng=None, rank=1):
    """Random POVM with ``m`` elements: ``S^{-1/2} G_w S^{-1/2}``, ``S = sum G_w``."""
    rng = np.random.default_rng(rng)
    G = []
    for _ in range(m):
        g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
        G.append(g @ g.conj().T)
    S = np.sum(G, axis=0)
    w, v = np.linalg.eigh(S)
    s = (v / np.sqrt(w)) @ v.conj().T
    return [hermitian(s @ g @ s) for g in G]


def locally_unbiased_from_povm(model, xi, elements, rng=None, spread=1.0):
    """Outcome map making the POVM locally unbiased at ``xi``.

    Solves the ``n + 1`` linear conditions per component; a random null
    space component (scaled by ``spread``) is added to the minimum-norm
    solution.
    """
    rng = np.random.default_rng(rng)
    xi = np.asarray(xi, dtype=float)
    rho, _, slds, _ = dual_frame(model, xi)
    parts = model.partials(xi)
    E = np.array(elements)
    n = len(xi)
    M = np.vstack([
        np.real(np.einsum("ab,wba->w", rho.matrix, E)),
        np.real(np.einsum("jab,wba->jw", parts, E)),
    ])
    if np.linalg.matrix_rank(M, tol=1e-10) < n + 1:
        raise ValueError("POVM cannot be made locally unbiased (rank deficient)")
    _, _, vt = np.linalg.svd(M)
    null = vt[n + 1:]
    values = []
    for i in range(n):
        b = np.concatenate([[xi[i]], np.eye(n)[i]])
        f = np.linalg.lstsq(M, b, rcond=None)[0]
        if len(null):
            f = f + spread * (rng.normal(size=len(null)) @ null)
        values.append(f)
    return DiscreteEstimator(elements, np.array(values).T)


# -- Monte Carlo ----------------------------------------------------------------

@dataclass
class MonteCarloResult:
    E_hat: np.ndarray
    V_hat: np.ndarray
    stderr: np.ndarray
    stderr_V: np.ndarray
    counts: np.ndarray
    shots: int
    seed: int


def sample_counts(probs, shots, seed, shards=8):
    """Outcome counts from counter-based substreams, merged by summation."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = np.asarray(probs, dtype=float)
    if abs(probs.sum() - 1) > 1e-9:
        raise ValueError("probabilities do not sum to 1")
    shards = max(1, min(shards, shots))
    sizes = np.full(shards, shots // shards)
    sizes[: shots % shards] += 1
    counts = np.zeros(len(probs), dtype=np.int64)
    for size, child in zip(sizes, np.random.SeedSequence(seed).spawn(shards)):
        rng = np.random.Generator(np.random.Philox(child))
        counts += rng.multinomial(size, probs)
    return counts


def monte_carlo_moments(rho, Pi, shots, seed, xi_true=None, shards=8):
    """Empirical mean and MSE matrix from simulated measurement outcomes.

    The MSE is taken about ``xi_true`` when given, otherwise about the
    sample mean. Standard errors are ``std / sqrt(shots)`` per entry.
    """
    counts = sample_counts(Pi.probabilities(rho), shots, seed, shards)
    w = counts / shots
    f = Pi.values
    E = w @ f
    center = E if xi_true is None else np.asarray(xi_true, dtype=float)
    dev = f - center
    V = (dev * w[:, None]).T @ dev
    var_f = w @ (f - E) ** 2
    prods = np.einsum("wi,wj->wij", dev, dev)
    var_V = np.einsum("w,wij->ij", w, (prods - V) ** 2)
    return MonteCarloResult(E, V, np.sqrt(var_f / shots), np.sqrt(var_V / shots),
                            counts, int(shots), int(seed))


def monte_carlo_quadratic(counts, values, u, center):
    """Sample mean and standard error of ``(u . (f - center))^2``."""
    shots = counts.sum()
    q = ((np.asarray(values) - center) @ np.asarray(u)) ** 2
    w = counts / shots
    mean = float(w @ q)
    return mean, float(np.sqrt(w @ (q - mean) ** 2 / shots))
