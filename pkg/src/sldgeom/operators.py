"""Hermitian operator algebra and the symmetric logarithmic derivative.

Hermitian operators are plain ``(d, d)`` complex ndarrays; :func:`hermitian`
is the validating constructor. Strictly positive states are wrapped in
:class:`DensityOperator`, which caches the eigendecomposition used by
:func:`solve_sld`.
"""

from __future__ import annotations

import numpy as np

TOL_HERM = 1e-12
POS_TOL = 1e-10
TRACE_TOL = 1e-12
SLD_COND_TOL = 1e-12
MAX_TENSOR_DIM = 4096


class DimensionMismatchError(ValueError):
    pass


class NotPositiveError(ValueError):
    """Raised when a state is not strictly positive or not unit trace."""


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when the SLD equation is numerically singular."""


def hermitian(a, check=False):
    """Return ``(a + a^H) / 2`` as a complex square array.

    With ``check=True`` the input must already be Hermitian to within
    ``TOL_HERM`` (relative to its largest entry).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if check:
        scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
        if np.max(np.abs(a - a.conj().T), initial=0.0) > TOL_HERM * scale:
            raise ValueError("matrix is not Hermitian")
    return 0.5 * (a + a.conj().T)


def _check_dims(*ops):
    dims = {op.shape for op in ops}
    if len(dims) != 1:
        raise DimensionMismatchError(f"operator shapes differ: {sorted(dims)}")


def identity(d):
    return np.eye(d, dtype=complex)


def commutator(a, b):
    return a @ b - b @ a


def hs_inner(a, b):
    """Hilbert-Schmidt inner product ``Re Tr(a^H b)``."""
    return float(np.real(np.vdot(a, b)))


def hs_norm(a):
    return float(np.linalg.norm(a))


class DensityOperator:
    """A strictly positive, unit-trace density matrix.

    Parameters
    ----------
    matrix : array_like, shape (d, d)
        Hermitian matrix; it is symmetrized on construction.
    normalize : bool
        Divide by the trace instead of requiring it to be one.

    Notes
    -----
    Eigenvalues are stored in descending order with matching eigenvector
    columns. Instances are treated as immutable.
    """

    def __init__(self, matrix, normalize=False):
        m = hermitian(matrix)
        tr = float(np.real(np.trace(m)))
        if normalize:
            if tr <= 0:
                raise NotPositiveError("cannot normalize a matrix with trace <= 0")
            m = m / tr
        elif abs(tr - 1.0) > TRACE_TOL:
            raise NotPositiveError(f"trace is {tr!r}, expected 1")
        w, v = np.linalg.eigh(m)
        if w[0] <= POS_TOL:
            raise NotPositiveError(f"minimum eigenvalue {w[0]:.3e} <= {POS_TOL}")
        m.setflags(write=False)
        self.matrix = m
        self.eigvals = w[::-1].copy()
        self.eigvecs = v[:, ::-1].copy()
        self._pair_sums = self.eigvals[:, None] + self.eigvals[None, :]

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"DensityOperator(dim={self.dim}, eigvals={np.round(self.eigvals, 6)})"


def as_density(rho):
    if isinstance(rho, DensityOperator):
        return rho
    return DensityOperator(rho)


def sym_product(a, b):
    """Symmetrized (Jordan) product ``(ab + ba) / 2``."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(a, b)
    return 0.5 * (a @ b + b @ a)


def expectation(rho, a):
    """``Tr(rho a)`` as a real number."""
    r = np.asarray(rho)
    a = np.asarray(a)
    _check_dims(r, a)
    # Tr(rho a) = sum_jk rho_jk a_kj
    return float(np.real(np.sum(r * a.T)))


def sld_inner(rho, a, b):
    """SLD inner product ``<a, b>_rho = Re Tr(rho a b)``."""
    r = np.asarray(rho)
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dims(r, a, b)
    return float(np.real(np.sum(r * (a @ b).T)))


def solve_sld(rho, m):
    """Solve ``rho o L = m`` for Hermitian ``L``.

    The equation is diagonal in the eigenbasis of ``rho``:
    ``L_jk = 2 m_jk / (lambda_j + lambda_k)``.

    Parameters
    ----------
    rho : DensityOperator
    m : ndarray, shape (d, d)
        Hermitian right-hand side; a nonzero trace is allowed.

    Returns
    -------
    L : ndarray, shape (d, d)

    Raises
    ------
    IllConditionedError
        If the smallest pair sum of eigenvalues is below ``1e-12``.
    """
    rho = as_density(rho)
    m = np.asarray(m, dtype=complex)
    _check_dims(rho.matrix, m)
    sums = rho._pair_sums
    if sums.min() < SLD_COND_TOL:
        raise IllConditionedError("state is numerically singular for the SLD equation")
    u = rho.eigvecs
    mt = u.conj().T @ m @ u
    lt = 2.0 * mt / sums
    return hermitian(u @ lt @ u.conj().T)


def tensor_power_operator(a, n):
    """Symmetrized lift ``sum_t I x ... x a x ... x I`` onto ``n`` copies."""
    a = np.asarray(a, dtype=complex)
    if n < 1:
        raise ValueError("n must be >= 1")
    d = a.shape[0]
    if d**n > MAX_TENSOR_DIM:
        raise ValueError(f"dimension {d}**{n} exceeds {MAX_TENSOR_DIM}")
    out = np.zeros((d**n, d**n), dtype=complex)
    eye = np.eye(d, dtype=complex)
    for t in range(n):
        term = np.ones((1, 1), dtype=complex)
        for s in range(n):
            term = np.kron(term, a if s == t else eye)
        out += term
    return out


def tensor_power_state(rho, n):
    """``rho`` tensored with itself ``n`` times."""
    r = np.asarray(rho, dtype=complex)
    d = r.shape[0]
    if d**n > MAX_TENSOR_DIM:
        raise ValueError(f"dimension {d}**{n} exceeds {MAX_TENSOR_DIM}")
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, r)
    return out


# -- realification of L_h ---------------------------------------------------

def to_real(a):
    """Coordinates of a Hermitian matrix in an HS-orthonormal real basis.

    The basis is ``E_jj``, ``(E_jk + E_kj)/sqrt2`` and ``i(E_jk - E_kj)/sqrt2``
    for ``j < k``, so Euclidean products of the returned vectors equal
    Hilbert-Schmidt products of the operators.
    """
    a = np.asarray(a)
    d = a.shape[-1]
    iu = np.triu_indices(d, 1)
    diag = np.real(np.diagonal(a, axis1=-2, axis2=-1))
    up = a[..., iu[0], iu[1]]
    return np.concatenate(
        [diag, np.sqrt(2) * np.real(up), np.sqrt(2) * np.imag(up)], axis=-1
    )


def from_real(x, d):
    """Inverse of :func:`to_real`."""
    x = np.asarray(x, dtype=float)
    k = d * (d - 1) // 2
    if x.shape[-1] != d * d:
        raise DimensionMismatchError(f"expected {d * d} coordinates, got {x.shape[-1]}")
    a = np.zeros(x.shape[:-1] + (d, d), dtype=complex)
    idx = np.arange(d)
    a[..., idx, idx] = x[..., :d]
    iu = np.triu_indices(d, 1)
    up = (x[..., d:d + k] + 1j * x[..., d + k:]) / np.sqrt(2)
    a[..., iu[0], iu[1]] = up
    a[..., iu[1], iu[0]] = up.conj()
    return a


def _span_basis(vectors, rcond=1e-10):
    """Orthonormal rows spanning the given row vectors (SVD, relative cutoff)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        return vectors[:0]
    _, s, vt = np.linalg.svd(vectors, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return vt[:0]
    return vt[s > rcond * s[0]]


class OperatorSubspace:
    """Real-linear span of Hermitian operators with an HS-orthonormal basis.

    Parameters
    ----------
    operators : sequence of ndarray
        Spanning set; linearly dependent members are dropped.
    dim_ambient : int, optional
        Hilbert space dimension, required only when ``operators`` is empty.
    """

    def __init__(self, operators, dim_ambient=None):
        ops = [hermitian(op) for op in operators]
        if ops:
            _check_dims(*ops)
            dim_ambient = ops[0].shape[0]
        elif dim_ambient is None:
            raise ValueError("dim_ambient is required for an empty subspace")
        self.dim_ambient = int(dim_ambient)
        vecs = to_real(np.array(ops)) if ops else np.zeros((0, self.dim_ambient**2))
        self._coords = _span_basis(vecs)
        self.basis = list(from_real(self._coords, self.dim_ambient))
        self.includes_identity = bool(
            self._coords.shape[0]
            and self.residual(np.eye(self.dim_ambient)) <= 1e-10
        )

    @property
    def dim(self):
        return self._coords.shape[0]

    def project(self, a):
        x = to_real(hermitian(a))
        return from_real(self._coords.T @ (self._coords @ x), self.dim_ambient)

    def residual(self, a):
        x = to_real(hermitian(a))
        return float(np.linalg.norm(x - self._coords.T @ (self._coords @ x)))

    def with_identity(self):
        """The subspace ``A + R`` (adds multiples of the identity)."""
        if self.includes_identity:
            return self
        return OperatorSubspace(self.basis + [np.eye(self.dim_ambient)])

    def __repr__(self):
        return (f"OperatorSubspace(dim={self.dim}, d={self.dim_ambient}, "
                f"includes_identity={self.includes_identity})")


def subspace_membership(space, a, tol=1e-9):
    """Test whether ``a`` lies in ``space``.

    Returns
    -------
    is_member : bool
        ``residual <= tol * max(1, ||a||_HS)``.
    residual : float
        HS norm of ``a`` minus its orthogonal projection.
    """
    a = np.asarray(a)
    if a.shape != (space.dim_ambient, space.dim_ambient):
        raise DimensionMismatchError("operator and subspace dimensions differ")
    r = space.residual(a)
    return r <= tol * max(1.0, hs_norm(a)), r
