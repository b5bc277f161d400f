import numpy as np
import pytest
from numpy.testing import assert_allclose

from sldgeom.autoparallel import (
    QuasiExponentialFamily,
    check_e_autoparallel_m_affine,
    counterexample_dim_ge3,
    involutivity_check,
    parallel_field_dimension,
    quasi_exponential_state,
    random_states,
    real_subspace,
)
from sldgeom.manifold import (
    TangentVector,
    affine_reparametrize,
    e_geodesic,
    e_transport,
    full_state_model,
)
from sldgeom.operators import DensityOperator, OperatorSubspace, expectation, subspace_membership
from sldgeom.qubit import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    bloch_ellipsoid_model,
    bloch_model,
    latitude_band_model,
)

from conftest import random_hermitian, random_state


def ellipsoid_grid(k=15, half=0.65):
    ax = np.linspace(-half, half, k)
    return np.array([[a, b] for a in ax for b in ax])


def counterexample_oracle(eps, d):
    """Least squares over real-symmetric C with raw complex entries as residual vector."""
    A = np.zeros((d, d))
    B = np.zeros((d, d))
    A[:3, :3] = np.diag([1, 1, 0])
    B[:3, :3] = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    rho = np.eye(d, dtype=complex)
    rho[:3, :3] += 1j * eps * np.array([[0, 1, 1], [-1, 0, 1], [-1, -1, 0]])
    rho /= d
    C0 = A @ B - B @ A
    target = C0 @ rho - rho @ C0
    cols = []
    for j in range(d):
        for k in range(j, d):
            E = np.zeros((d, d))
            E[j, k] = E[k, j] = 1
            cols.append((rho @ E + E @ rho).ravel() / 2)
    M = np.array(cols).T
    Mr = np.vstack([M.real, M.imag])
    t = np.concatenate([target.ravel().real, target.ravel().imag])
    x, *_ = np.linalg.lstsq(Mr, t, rcond=None)
    return np.linalg.norm(Mr @ x - t)


class TestCertificate:
    def test_ellipsoid(self):
        res = check_e_autoparallel_m_affine(bloch_ellipsoid_model(0.3), ellipsoid_grid())
        assert res.verdict and res.max_residual < 1e-8
        assert_allclose(res.certificate[0], SIGMA_X, atol=1e-10)
        assert_allclose(res.certificate[1], SIGMA_Y, atol=1e-10)

    def test_latitude_band_fails(self):
        ax_t, ax_p = np.linspace(0.8, 2.2, 10), np.linspace(-1.5, 1.5, 10)
        grid = np.array([[t, p] for t in ax_t for p in ax_p])
        res = check_e_autoparallel_m_affine(latitude_band_model(), grid)
        assert not res.verdict and res.max_residual > 1e-3
        xa, xb, dist = res.witness
        assert dist == pytest.approx(res.max_pairwise)

    def test_quasi_exponential(self):
        F = [np.diag([1.0, 0, -1, 2]), np.diag([0, 1.0, 1, -1])]
        fam = QuasiExponentialFamily(F, np.diag([0.1, 0.2, 0.3, 0.4]))
        thetas = np.random.default_rng(2).normal(scale=0.6, size=(12, 2))
        grid = np.array([fam.expectation_coords(t) for t in thetas])
        res = check_e_autoparallel_m_affine(fam.expectation_model(), grid)
        assert res.verdict
        for a, b in zip(res.certificate, F):
            assert_allclose(a, b, atol=1e-9)
        assert not check_e_autoparallel_m_affine(fam.natural_model(), thetas).verdict

    def test_affine_reparametrization(self):
        model = bloch_ellipsoid_model(0.3)
        A = np.array([[1.5, 0.4], [-0.2, 0.8]])
        b = np.array([0.3, -0.1])
        grid = ellipsoid_grid(7, 0.6)
        base = check_e_autoparallel_m_affine(model, grid)
        moved = check_e_autoparallel_m_affine(affine_reparametrize(model, A, b),
                                              grid @ A.T + b)
        assert base.verdict == moved.verdict
        expected = np.einsum("ki,iab->kab", A, np.array(base.certificate)) \
            + b[:, None, None] * np.eye(2)
        assert_allclose(np.array(moved.certificate), expected, atol=1e-9)
        neg = latitude_band_model()
        g2 = np.array([[1.0, 0.1], [1.4, -0.5], [2.0, 0.9]])
        assert not check_e_autoparallel_m_affine(
            affine_reparametrize(neg, A, b), g2 @ A.T + b).verdict

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            check_e_autoparallel_m_affine(bloch_model(), [[0, 0, 0]])


class TestQuasiExponentialState:
    F = [np.diag([1.0, -1, 0.5]), np.diag([0.0, 2, -1])]

    def test_zero(self, rng):
        P = random_state(3, rng)
        assert_allclose(quasi_exponential_state(P, self.F, [0, 0]).matrix, P.matrix, atol=1e-14)

    def test_single_generator_is_geodesic(self, rng):
        P = random_state(3, rng)
        assert_allclose(quasi_exponential_state(P, self.F[:1], [0.7]).matrix,
                        e_geodesic(P, self.F[0], 0.7).matrix, atol=1e-13)

    def test_diagonal_is_classical(self):
        P = np.diag([0.2, 0.3, 0.5])
        theta = np.array([0.4, -0.3])
        s = theta[0] * np.diag(self.F[0]) + theta[1] * np.diag(self.F[1])
        p = np.diag(P) * np.exp(s)
        out = quasi_exponential_state(DensityOperator(P), self.F, theta)
        assert_allclose(np.diag(out.matrix).real, p / p.sum(), atol=1e-14)

    def test_noncommuting_rejected(self):
        with pytest.raises(ValueError):
            quasi_exponential_state(DensityOperator(np.eye(2) / 2), [SIGMA_X, SIGMA_Z], [1, 1])

    def test_valid_states(self, rng):
        P = random_state(3, rng)
        for theta in rng.normal(scale=1.5, size=(20, 2)):
            rho = quasi_exponential_state(P, self.F, theta)
            assert abs(np.trace(rho.matrix) - 1) < 1e-12 and rho.eigvals[-1] > 0

    def test_legendre_inversion(self, rng):
        fam = QuasiExponentialFamily(self.F, random_state(3, rng))
        for theta in rng.normal(size=(5, 2)):
            xi = fam.expectation_coords(theta)
            assert_allclose(fam.natural_coords(xi), theta, atol=1e-9)
            rho = fam.state(theta)
            assert_allclose([expectation(rho, f) for f in self.F], xi, atol=1e-12)


class TestRealSubspace:
    def test_qubit(self):
        V = real_subspace(d=2)
        target = OperatorSubspace([np.eye(2), SIGMA_X, SIGMA_Z])
        assert V.dim == 3 and V.includes_identity
        for op in V.basis:
            assert subspace_membership(target, op)[0]
        assert not subspace_membership(V, SIGMA_Y)[0]

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_dimension(self, d):
        assert real_subspace(d=d).dim == d * (d + 1) // 2

    def test_non_unitary(self):
        with pytest.raises(ValueError):
            real_subspace(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_transport_stays_real(self, rng):
        V = real_subspace(d=3)
        states = []
        for _ in range(2):
            g = rng.normal(size=(3, 3))
            m = g @ g.T + 0.1 * np.eye(3)
            states.append(DensityOperator(m, normalize=True))
        rho, sigma = states
        A = rng.normal(size=(3, 3))
        A = A + A.T
        X = TangentVector(rho, sld=A - expectation(rho, A) * np.eye(3))
        assert subspace_membership(V, e_transport(X, sigma).sld)[0]


class TestInvolutivity:
    def test_commuting_span(self):
        V = OperatorSubspace([np.diag([1.0, 0, 0]), np.diag([0, 1.0, -1])])
        res = involutivity_check(V, n_random=10)
        assert res.involutive and res.worst_residual < 1e-14

    def test_real_symmetric_three_levels(self):
        res = involutivity_check(real_subspace(d=3), n_random=10, seed=1)
        assert not res.involutive and res.worst_residual > 1e-3
        assert len(res.witness) == 4

    def test_user_states_appended(self, rng):
        res = involutivity_check(real_subspace(d=2), states=[random_state(2, rng)], n_random=0)
        assert res.involutive and len(res.residuals) == 3

    def test_random_states_valid(self):
        for rho in random_states(4, 20, 5):
            assert rho.eigvals[-1] >= 1e-3 / 4 - 1e-12


class TestCounterexample:
    def test_unperturbed(self):
        assert counterexample_dim_ge3(0.0, 3) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("d,expected", [(3, 0.0333021272), (4, 0.0249765954)])
    def test_frozen_values(self, d, expected):
        res = counterexample_dim_ge3(0.05, d)
        assert res > 1e-3
        assert_allclose(res, expected, rtol=1e-8)
        assert_allclose(res, counterexample_oracle(0.05, d), rtol=1e-9)

    def test_monotone_and_vanishing(self):
        eps = np.linspace(0, 0.1, 21)
        res = np.array([counterexample_dim_ge3(e, 3) for e in eps])
        assert np.all(np.diff(res) > 0)
        assert res[1] < 0.1 * res[-1]

    def test_not_positive(self):
        with pytest.raises(ValueError):
            counterexample_dim_ge3(0.9, 3)

    def test_small_dimension(self):
        with pytest.raises(ValueError):
            counterexample_dim_ge3(0.05, 2)


class TestParallelFieldDimension:
    @pytest.mark.parametrize("d", [2, 3])
    def test_full_state_space(self, d):
        model = full_state_model(d)
        samples = np.random.default_rng(0).uniform(-0.05, 0.05, size=(4, model.n))
        assert parallel_field_dimension(model, samples) == d * d - 1

    def test_autoparallel_surface(self):
        assert parallel_field_dimension(bloch_ellipsoid_model(0.3), ellipsoid_grid(5)) == 2

    def test_negative_control(self):
        grid = np.array([[t, p] for t in (0.9, 1.5, 2.1) for p in (-1.0, 0.0, 1.0)])
        assert parallel_field_dimension(latitude_band_model(), grid) < 2

    def test_few_samples_warns(self):
        with pytest.warns(RuntimeWarning):
            parallel_field_dimension(bloch_model(), [[0, 0, 0], [0.1, 0, 0]])


class TestQuasiExpDimension:
    def test_dim_known_when_box_centre_is_singular(self):
        # centre of the F-range box sits on the polytope boundary here
        fam = QuasiExponentialFamily([np.diag([1.0, 0, -1, 2]), np.diag([0, 1.0, 1, -1])])
        assert fam.expectation_model().dim == 4
        assert fam.natural_model().dim == 4
