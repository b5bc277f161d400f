"""Numerical deciders for e-autoparallel submanifolds.

All verdicts are certified on finite samples (coordinate grids or state
samples) with explicit tolerances. A passing verdict is evidence on the
sample, not a proof for the whole chart.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist, squareform

from .manifold import DomainError, ParametricModel, _sandwich, dual_frame
from .operators import (
    DensityOperator,
    OperatorSubspace,
    as_density,
    commutator,
    from_real,
    hermitian,
    hs_norm,
    solve_sld,
    sym_product,
    to_real,
)

COMMUTE_TOL = 1e-10
INTERSECT_TOL = 1e-8


@dataclass
class AutoparallelResult:
    """Outcome of :func:`check_e_autoparallel_m_affine`.

    Attributes
    ----------
    verdict : bool
        Max pairwise distance of the candidate ``F^i(xi)`` is within ``tol``.
    max_pairwise : float
        Largest HS distance between candidate tuples at two grid points.
    max_residual : float
        Largest HS distance of a candidate tuple from the grid average.
    certificate : list of ndarray
        Grid-averaged ``F^i``.
    witness : tuple or None
        ``(xi_a, xi_b, distance)`` for the worst pair when the verdict fails.
    """

    verdict: bool
    tol: float
    max_pairwise: float
    max_residual: float
    certificate: list
    grid: np.ndarray
    witness: tuple = None
    per_point: np.ndarray = field(default=None, repr=False)


def candidate_observables(model, xi):
    """``F^i(xi) = sum_j g^ij L_j + xi^i I`` at one point, shape ``(n, d, d)``."""
    xi = np.asarray(xi, dtype=float)
    rho, _, _, raised = dual_frame(model, xi)
    return raised + xi[:, None, None] * np.eye(rho.dim)


def check_e_autoparallel_m_affine(model, grid, tol=1e-8):
    """Test whether ``model`` is e-autoparallel with m-affine coordinates.

    The coordinates are m-affine on an e-autoparallel submanifold exactly
    when ``F^i(xi)`` does not depend on ``xi``; then ``xi^i = <F^i>``.

    Parameters
    ----------
    model : ParametricModel
    grid : array_like, shape (N, n)
        At least two domain points.
    tol : float
        Bound on the largest pairwise HS distance between candidate tuples.

    Returns
    -------
    AutoparallelResult
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] < 2:
        raise ValueError("the grid needs at least two points")
    if tol <= 0:
        raise ValueError("tol must be positive")
    ops = np.array([candidate_observables(model, xi) for xi in grid])
    vecs = to_real(ops).reshape(len(grid), -1)
    dists = pdist(vecs)
    mean = vecs.mean(axis=0)
    per_point = np.linalg.norm(vecs - mean, axis=1)
    max_pair = float(dists.max())
    verdict = max_pair <= tol
    witness = None
    if not verdict:
        a, b = np.unravel_index(np.argmax(squareform(dists)), (len(grid), len(grid)))
        witness = (grid[a].copy(), grid[b].copy(), max_pair)
    d = ops.shape[-1]
    cert = list(from_real(mean.reshape(model.n, d * d), d))
    return AutoparallelResult(verdict, tol, max_pair, float(per_point.max()),
                              cert, grid, witness, per_point)


def random_states(d, count, rng=None, radius=None, margin=1e-3):
    """Random strictly positive states from a Hilbert-Schmidt ball around ``I/d``.

    A traceless Hermitian direction is drawn from the Gaussian ensemble and
    the HS radius uniformly in volume. States whose smallest eigenvalue
    falls below ``margin / d`` are pulled toward ``I/d`` by shifting the
    spectrum.
    """
    rng = np.random.default_rng(rng)
    if radius is None:
        radius = np.sqrt((d - 1) / d)  # circumradius of the state space
    out = []
    for _ in range(count):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = hermitian(g)
        h -= np.trace(h).real / d * np.eye(d)
        t = radius * rng.random() ** (1.0 / (d * d - 1))
        m = np.eye(d) / d + t * h / hs_norm(h)
        w, v = np.linalg.eigh(m)
        floor = margin / d
        if w[0] < floor:
            s = (floor - w[0]) / (1.0 / d - w[0])
            w = (1 - s) * w + s / d
        out.append(DensityOperator((v * w) @ v.conj().T, normalize=True))
    return out


@dataclass
class InvolutivityResult:
    involutive: bool
    tol: float
    worst_residual: float
    witness: tuple = None
    residuals: list = field(default_factory=list, repr=False)


def involutivity_check(subspace, states=None, tol=1e-10, n_random=20, seed=0):
    """Check closure of ``rho o (A + R)`` under the double-commutator bracket.

    For every state and pair of basis operators ``(A_a, A_b)`` the unique
    ``C`` with ``rho o C = [[A_a, A_b], rho]`` must lie in ``A + R``.

    Parameters
    ----------
    subspace : OperatorSubspace
    states : sequence of DensityOperator, optional
        Appended to ``n_random`` random states drawn with ``seed``.
    tol : float
        Membership tolerance on the HS residual of ``C``.

    Returns
    -------
    InvolutivityResult
        ``witness`` is ``(state_index, a, b, residual)`` of the worst pair.
    """
    d = subspace.dim_ambient
    pool = random_states(d, n_random, seed) if n_random else []
    pool += [as_density(s) for s in (states or [])]
    if not pool:
        raise ValueError("no states to test")
    target = subspace.with_identity()
    basis = subspace.basis
    worst, witness, residuals = 0.0, None, []
    for s, rho in enumerate(pool):
        for a in range(len(basis)):
            for b in range(a + 1, len(basis)):
                rhs = commutator(commutator(basis[a], basis[b]), rho.matrix)
                C = solve_sld(rho, rhs)
                r = target.residual(C)
                residuals.append(r)
                if r > worst or witness is None:
                    worst, witness = max(r, worst), (s, a, b, r)
    return InvolutivityResult(worst <= tol, tol, worst, witness, residuals)


def real_subspace(B=None, d=None):
    """Real-linear span of ``|i><j| + |j><i|`` written in the basis ``B``.

    Parameters
    ----------
    B : ndarray, shape (d, d), optional
        Unitary whose columns are the basis vectors; identity by default.
    """
    if B is None:
        B = np.eye(d)
    B = np.asarray(B, dtype=complex)
    d = B.shape[0]
    if np.max(np.abs(B.conj().T @ B - np.eye(d))) > 1e-10:
        raise ValueError("basis matrix is not unitary")
    ops = []
    for i in range(d):
        for j in range(i, d):
            e = np.zeros((d, d))
            e[i, j] = e[j, i] = 1.0
            ops.append(B @ e @ B.conj().T)
    return OperatorSubspace(ops)


def _check_commuting(F):
    for i in range(len(F)):
        for j in range(i + 1, len(F)):
            if hs_norm(commutator(F[i], F[j])) > COMMUTE_TOL:
                raise ValueError(f"observables {i} and {j} do not commute")


def quasi_exponential_state(P, F, theta):
    """``exp(S/2) P exp(S/2) / Tr(P exp S)`` with ``S = sum theta_i F^i``.

    The ``F^i`` must commute pairwise.
    """
    P = as_density(P)
    F = [hermitian(f) for f in F]
    _check_commuting(F)
    theta = np.asarray(theta, dtype=float)
    S = np.einsum("i,iab->ab", theta, np.array(F))
    w, v = np.linalg.eigh(S)
    if np.max(np.abs(w)) > 700:
        raise OverflowError("exponent exceeds the overflow guard")
    return _sandwich(P, w, v)


class QuasiExponentialFamily:
    """Quasi-classical exponential family in natural or expectation coordinates.

    Parameters
    ----------
    F : sequence of ndarray
        Commuting Hermitian observables, linearly independent together with I.
    P : DensityOperator, optional
        Reference state; ``I/d`` by default.
    """

    def __init__(self, F, P=None):
        self.F = np.array([hermitian(f) for f in F])
        _check_commuting(self.F)
        d = self.F.shape[-1]
        self.P = as_density(np.eye(d) / d if P is None else P)
        span = OperatorSubspace(list(self.F) + [np.eye(d)])
        if span.dim != len(self.F) + 1:
            raise ValueError("F and I must be linearly independent")
        # common eigenbasis: diagonalize a generic combination
        mix = np.einsum("i,iab->ab", 1 + np.arange(len(self.F)) * np.pi / 7, self.F)
        _, self._U = np.linalg.eigh(mix)
        self._spec = np.real(np.einsum("ka,iab,bk->ik", self._U.conj().T, self.F, self._U))
        # P in the common eigenbasis; Tr(P e^S) only needs its diagonal
        self._pdiag = np.real(np.diag(self._U.conj().T @ self.P.matrix @ self._U))
        self.n = len(self.F)
        self.d = d

    def _log_partition(self, theta):
        s = theta @ self._spec
        m = s.max()
        w = self._pdiag * np.exp(s - m)
        z = w.sum()
        p = w / z
        mean = self._spec @ p
        cov = (self._spec * p) @ self._spec.T - np.outer(mean, mean)
        return m + np.log(z), mean, cov

    def state(self, theta):
        theta = np.asarray(theta, dtype=float)
        return _sandwich(self.P, theta @ self._spec, self._U)

    def expectation_coords(self, theta):
        return self._log_partition(np.asarray(theta, dtype=float))[1]

    def natural_coords(self, xi):
        """Legendre inversion: ``theta`` with ``<F^i>_theta = xi^i``."""
        return np.array(self._natural(tuple(np.asarray(xi, dtype=float))))

    @lru_cache(maxsize=4096)
    def _natural(self, xi):
        xi = np.array(xi)

        def obj(t):
            psi, mean, cov = self._log_partition(t)
            return psi - t @ xi, mean - xi, cov

        res = minimize(lambda t: obj(t)[0], np.zeros(self.n), method="trust-exact",
                       jac=lambda t: obj(t)[1], hess=lambda t: obj(t)[2],
                       options={"gtol": 1e-13, "maxiter": 500})
        t = res.x
        for _ in range(3):
            _, g, h = obj(t)
            t = t - np.linalg.solve(h, g)
        if np.linalg.norm(obj(t)[1]) > 1e-9:
            raise DomainError(f"{xi} is not an attainable expectation vector")
        return tuple(t)

    def _attainable(self, xi):
        try:
            t = self.natural_coords(xi)
        except (DomainError, np.linalg.LinAlgError):
            return False
        return bool(np.all(np.isfinite(t)) and np.max(np.abs(t @ self._spec)) < 700)

    def natural_model(self):
        """Model in coordinates ``theta`` (e-affine, not m-affine)."""
        def partials(theta):
            rho = self.state(theta)
            mean = self.expectation_coords(theta)
            return np.array([sym_product(rho.matrix, f - m * np.eye(self.d))
                             for f, m in zip(self.F, mean)])

        return ParametricModel(lambda t: self.state(t), self.n, None, partials,
                               lambda t: np.max(np.abs(t @ self._spec)) < 700,
                               name="quasi-exp[theta]", hilbert_dim=self.d)

    def expectation_model(self):
        """Model in coordinates ``xi^i = <F^i>`` (m-affine)."""
        lo = self._spec.min(axis=1)
        hi = self._spec.max(axis=1)

        def state(xi):
            return self.state(self.natural_coords(xi))

        def partials(xi):
            theta = self.natural_coords(xi)
            rho = self.state(theta)
            _, mean, cov = self._log_partition(theta)
            dtheta = np.array([sym_product(rho.matrix, f - m * np.eye(self.d))
                               for f, m in zip(self.F, mean)])
            # d theta / d xi = Cov^{-1}
            return np.einsum("jk,jab->kab", np.linalg.inv(cov), dtheta)

        return ParametricModel(state, self.n, np.column_stack([lo, hi]), partials,
                               self._attainable, name="quasi-exp", hilbert_dim=self.d)


def counterexample_dim_ge3(eps, d=3):
    """Least-squares defect of ``[[A, B], rho] = rho o C`` over real-symmetric ``C``.

    ``A``, ``B`` are real symmetric and ``rho`` is a perturbation of ``I/d``
    by an imaginary antisymmetric block of size ``eps``. A nonzero result
    shows that the real-symmetric operators do not give an involutive
    distribution at ``rho``.

    Returns
    -------
    residual : float
        ``min_C ||rho o C - [[A, B], rho]||_HS``.
    """
    if d < 3:
        raise ValueError("the construction needs d >= 3")
    A = np.zeros((d, d), dtype=complex)
    B = np.zeros((d, d), dtype=complex)
    P = np.eye(d, dtype=complex)
    A[:3, :3] = np.diag([1.0, 1.0, 0.0])
    B[:3, :3] = np.ones((3, 3)) - np.eye(3)
    P[:3, :3] = np.eye(3) + 1j * eps * np.array([[0, 1, 1], [-1, 0, 1], [-1, -1, 0]])
    if np.linalg.eigvalsh(P)[0] <= 1e-10:
        raise ValueError(f"eps={eps} makes the state non-positive")
    rho = DensityOperator(P / d)
    rhs = commutator(commutator(A, B), rho.matrix)
    sym = real_subspace(d=d).basis
    design = to_real(np.array([sym_product(rho.matrix, c) for c in sym])).T
    target = to_real(rhs)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return float(np.linalg.norm(design @ coef - target))


def parallel_field_dimension(model, samples, tol=INTERSECT_TOL):
    """Dimension of the space of e-parallel fields, from sampled constraints.

    An observable ``F`` gives a parallel field when ``F - <F>_rho`` is a
    tangent SLD at every ``rho``, i.e. ``F`` lies in ``span{L_i(rho), I}``
    for all sampled ``rho``. The intersection is the null space of the
    stacked complement projectors; its dimension minus one (for ``I``) is
    returned.

    Fewer than three samples only give an upper bound; a warning is issued.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(samples) < 3:
        warnings.warn("fewer than 3 samples: result is only an upper bound",
                      RuntimeWarning, stacklevel=2)
    blocks = []
    for xi in samples:
        rho, _, slds, _ = dual_frame(model, xi)
        vecs = to_real(np.concatenate([slds, np.eye(rho.dim)[None]]))
        q, _ = np.linalg.qr(vecs.T)
        blocks.append(np.eye(q.shape[0]) - q @ q.T)
    s = np.linalg.svd(np.vstack(blocks), compute_uv=False)
    null_dim = int(np.sum(s <= tol)) + (blocks[0].shape[1] - len(s))
    return null_dim - 1
