import numpy as np
import pytest
from numpy.testing import assert_allclose

from sldgeom.autoparallel import QuasiExponentialFamily
from sldgeom.estimation import (
    DiscreteEstimator,
    FiltrationSpec,
    NotUnbiasedError,
    build_filtration,
    build_local_random_estimator,
    check_locally_unbiased,
    complete_basis,
    cr_gap,
    efficient_function_space_dim,
    estimator_moments,
    extrapolate_limit,
    filtration_estimator,
    filtration_variance,
    local_random_variance,
    locally_unbiased_from_povm,
    monte_carlo_moments,
    monte_carlo_quadratic,
    observable_variance,
    random_povm,
    sample_counts,
    scalar_cr_bound,
    scalar_efficient_estimator,
    spectral_decomposition,
    weighted_variance,
)
from sldgeom.manifold import dual_frame, full_state_model
from sldgeom.operators import DensityOperator, expectation
from sldgeom.qubit import SIGMA_X, SIGMA_Y, SIGMA_Z, bloch_ellipsoid_model, bloch_model

from conftest import random_bloch, random_hermitian

I2 = np.eye(2)
P_UP, P_DOWN = np.diag([1.0, 0]), np.diag([0, 1.0])


def spectral_estimator(F_list):
    """Joint spectral measure of commuting diagonal observables."""
    d = F_list[0].shape[0]
    elements = [np.diag(np.eye(d)[k]) for k in range(d)]
    values = np.array([[np.diag(F)[k].real for F in F_list] for k in range(d)])
    return DiscreteEstimator(elements, values)


def random_gamma(rng, p, xi):
    n = len(p)
    gamma = rng.normal(scale=0.5, size=(n, n))
    gamma[-1] = (xi - p[:-1] @ gamma[:-1]) / p[-1]
    return gamma


class TestDiscreteEstimator:
    def test_incomplete(self):
        with pytest.raises(ValueError):
            DiscreteEstimator([P_UP], [[1.0]])

    def test_not_positive(self):
        with pytest.raises(ValueError):
            DiscreteEstimator([2 * P_UP, P_DOWN - P_UP], [[1.0], [0.0]])

    def test_observables(self):
        Pi = DiscreteEstimator([P_UP, P_DOWN], [[1.0], [-1.0]])
        assert_allclose(Pi.observables()[0], SIGMA_Z)


class TestMoments:
    def test_deterministic(self):
        Pi = DiscreteEstimator([I2], [[0.3, -0.2]])
        E, V = estimator_moments(DensityOperator(I2 / 2), Pi, [0.1, 0.1])
        assert_allclose(E, [0.3, -0.2])
        assert_allclose(V, np.outer([0.2, -0.3], [0.2, -0.3]))

    def test_spectral_sigma_z(self):
        Pi = DiscreteEstimator([P_UP, P_DOWN], [[1.0], [-1.0]])
        E, V = estimator_moments(DensityOperator(I2 / 2), Pi, [0.0])
        assert_allclose(E, [0.0])
        assert_allclose(V, [[1.0]])

    def test_psd(self, rng):
        Pi = DiscreteEstimator(random_povm(3, 7, rng), rng.normal(size=(7, 3)))
        _, V = estimator_moments(DensityOperator(np.eye(3) / 3), Pi, rng.normal(size=3))
        assert np.linalg.eigvalsh(V)[0] >= -1e-14


class TestUnbiasedness:
    def test_randomized_construction(self, rng):
        xi = random_bloch(rng, 0.6)
        p = rng.dirichlet(np.ones(3))
        Pi = build_local_random_estimator(bloch_model(), xi, rng.normal(size=(3, 3)), p,
                                          random_gamma(rng, p, xi))
        assert check_locally_unbiased(bloch_model(), xi, Pi)
        assert_allclose(Pi.elements.sum(axis=0), I2, atol=1e-10)

    def test_deterministic_fails(self):
        Pi = DiscreteEstimator([I2], [[0.0, 0.0, 0.0]])
        assert not check_locally_unbiased(bloch_model(), np.zeros(3), Pi)
        with pytest.raises(NotUnbiasedError):
            cr_gap(bloch_model(), np.zeros(3), Pi)

    def test_gamma_constraint(self, rng):
        with pytest.raises(ValueError):
            build_local_random_estimator(bloch_model(), np.zeros(3), np.eye(3),
                                         np.ones(3) / 3, np.ones((3, 3)))

    def test_singular_basis(self):
        with pytest.raises(ValueError):
            build_local_random_estimator(bloch_model(), np.zeros(3), np.ones((3, 3)),
                                         np.ones(3) / 3)


class TestCramerRao:
    def test_efficient_on_commuting_model(self):
        F = [np.diag([1.0, 0, -1, 2]), np.diag([0, 1.0, 1, -1])]
        fam = QuasiExponentialFamily(F)
        model = fam.expectation_model()
        Pi = spectral_estimator(F)
        for theta in ([0.2, -0.4], [-0.5, 0.3]):
            xi = fam.expectation_coords(theta)
            assert_allclose(cr_gap(model, xi, Pi), 0, atol=1e-10)

    def test_inefficient_has_positive_gap(self):
        F = [np.diag([1.0, 0, -1, 2]), np.diag([0, 1.0, 1, -1])]
        fam = QuasiExponentialFamily(F)
        xi = fam.expectation_coords([0.1, 0.2])
        Pi = filtration_estimator(FiltrationSpec(F), 0.1)
        gap = cr_gap(fam.expectation_model(), xi, Pi)
        assert np.linalg.eigvalsh(gap)[-1] > 1e-3

    def test_uniform_randomized_pattern(self, rng):
        n = 3
        xi = random_bloch(rng, 0.6)
        U = rng.normal(size=(n, n))
        Pi = build_local_random_estimator(bloch_model(), xi, U, np.ones(n) / n)
        _, G, _, _ = dual_frame(bloch_model(), xi)
        gap = cr_gap(bloch_model(), xi, Pi)
        for u in U:
            assert_allclose(u @ gap @ u, (n - 1) * (u @ G.inverse @ u), rtol=1e-9)

    @pytest.mark.parametrize("model,sampler", [
        (bloch_model(), lambda rng: random_bloch(rng, 0.7)),
        (bloch_ellipsoid_model(0.3), lambda rng: rng.uniform(-0.5, 0.5, 2)),
        (full_state_model(3), lambda rng: rng.uniform(-0.05, 0.05, 8)),
    ])
    def test_random_unbiased_estimators(self, rng, model, sampler):
        for _ in range(20):
            xi = sampler(rng)
            d = model.dim
            Pi = locally_unbiased_from_povm(model, xi, random_povm(d, d * d + 3, rng), rng)
            assert check_locally_unbiased(model, xi, Pi)
            assert np.linalg.eigvalsh(cr_gap(model, xi, Pi))[0] >= -1e-9


class TestRandomizedVarianceIdentity:
    def test_variance_identity(self, rng):
        model = bloch_model()
        for _ in range(20):
            xi = random_bloch(rng, 0.7)
            p = rng.dirichlet(np.ones(3))
            U = rng.normal(size=(3, 3))
            gamma = random_gamma(rng, p, xi)
            Pi = build_local_random_estimator(model, xi, U, p, gamma)
            rho, G, _, _ = dual_frame(model, xi)
            _, V = estimator_moments(rho, Pi, xi)
            assert_allclose(np.einsum("ki,ij,kj->k", U, V, U),
                            local_random_variance(G.inverse, U, p, gamma, xi), rtol=1e-9)

    def test_unbiased_offsets(self, rng):
        xi = random_bloch(rng, 0.5)
        U = complete_basis(rng.normal(size=3))
        p = np.array([0.5, 0.3, 0.2])
        Pi = build_local_random_estimator(bloch_model(), xi, U, p)
        rho, G, _, _ = dual_frame(bloch_model(), xi)
        _, V = estimator_moments(rho, Pi, xi)
        u = U[0]
        assert_allclose(u @ V @ u, (u @ G.inverse @ u) / p[0], rtol=1e-10)


class TestFiltration:
    def setup_method(self):
        self.model = bloch_ellipsoid_model(0.3)
        self.spec = FiltrationSpec([SIGMA_X, SIGMA_Y], np.array([[1.0, 0.4], [-0.3, 1.0]]))

    def test_formula(self, rng):
        ests = build_filtration(self.spec)
        for xi in rng.uniform(-0.5, 0.5, size=(10, 2)):
            rho, G, _, _ = dual_frame(self.model, xi)
            u = self.spec.u_basis[0]
            for eps, Pi in zip(self.spec.eps_schedule, ests):
                assert check_locally_unbiased(self.model, xi, Pi)
                _, V = estimator_moments(rho, Pi, xi)
                assert_allclose(u @ V @ u, filtration_variance(G.inverse, u, xi, 1 - eps),
                                rtol=1e-10)

    def test_limit(self):
        xi = np.array([0.3, -0.4])
        rho, G, _, _ = dual_frame(self.model, xi)
        u = self.spec.u_basis[0]
        eps = [0.1, 0.01, 0.001]
        vals = []
        for e in eps:
            _, V = estimator_moments(rho, filtration_estimator(self.spec, e), xi)
            vals.append(u @ V @ u)
        bound = u @ G.inverse @ u
        assert abs(vals[-1] - bound) < abs(vals[0] - bound)
        assert_allclose(vals[-1], bound, rtol=2e-3)
        assert_allclose(extrapolate_limit(eps, vals), bound, rtol=1e-9)

    def test_state_independent(self):
        a = build_filtration(self.spec)
        b = build_filtration(self.spec)
        for x, y in zip(a, b):
            assert_allclose(x.elements, y.elements)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FiltrationSpec([SIGMA_X, SIGMA_Y], eps_schedule=(0.1, 0.2))
        with pytest.raises(ValueError):
            FiltrationSpec([SIGMA_X, SIGMA_Y], np.ones((2, 2)))
        with pytest.raises(ValueError):
            FiltrationSpec([SIGMA_X, SIGMA_Y], eps_schedule=(1.5, 0.1))

    def test_spectral_clustering(self):
        vals, projs = spectral_decomposition(np.diag([1.0, 1.0 + 1e-12, -2.0]))
        assert len(vals) == 2
        assert_allclose(projs.sum(axis=0), np.eye(3), atol=1e-14)


class TestScalarEstimation:
    def test_first_coordinate(self):
        F = scalar_efficient_estimator(bloch_model(), np.zeros(3), 0.0, [1, 0, 0])
        assert_allclose(F, SIGMA_X, atol=1e-14)
        assert observable_variance(DensityOperator(I2 / 2), F) == pytest.approx(1.0)

    def test_constant(self):
        F = scalar_efficient_estimator(bloch_model(), [0.1, 0.2, 0.3], 2.5, np.zeros(3))
        assert_allclose(F, 2.5 * I2)
        assert observable_variance(DensityOperator(I2 / 2), F) == pytest.approx(0.0, abs=1e-15)

    def test_variance_is_bound(self, rng):
        model = full_state_model(3)
        xi = rng.uniform(-0.05, 0.05, 8)
        grad = rng.normal(size=8)
        F = scalar_efficient_estimator(model, xi, 0.7, grad)
        rho = model.state(xi)
        assert_allclose(observable_variance(rho, F), scalar_cr_bound(model, xi, grad), rtol=1e-9)
        assert expectation(rho, F) == pytest.approx(0.7)

    def test_variance_equals_gradient_norm(self, rng):
        model = full_state_model(3)
        xi = rng.uniform(-0.05, 0.05, 8)
        A = random_hermitian(3, rng)
        h = 1e-5
        grad = np.array([(expectation(model.state(xi + h * e), A)
                          - expectation(model.state(xi - h * e), A)) / (2 * h)
                         for e in np.eye(8)])
        assert_allclose(observable_variance(model.state(xi), A),
                        scalar_cr_bound(model, xi, grad), rtol=1e-6)
        # g(grad f, d_j) = d_j f
        raised = dual_frame(model, xi)[3]
        field = np.einsum("i,iab->ab", grad, raised)
        assert_allclose([np.trace(p @ field).real for p in model.partials(xi)], grad, atol=1e-5)


def test_efficient_function_space_dim():
    samples = np.random.default_rng(0).uniform(-0.05, 0.05, size=(4, 3))
    assert efficient_function_space_dim(full_state_model(2), samples) == 4
    ax = np.linspace(-0.5, 0.5, 4)
    grid = np.array([[a, b] for a in ax for b in ax])
    assert efficient_function_space_dim(bloch_ellipsoid_model(0.2), grid) == 3


def test_weighted_variance():
    assert weighted_variance(np.diag([1.0, 2.0]), np.diag([3.0, 0.5])) == pytest.approx(4.0)


class TestMonteCarlo:
    def test_within_four_standard_errors(self, rng):
        xi = np.array([0.2, -0.1, 0.3])
        Pi = build_local_random_estimator(bloch_model(), xi, rng.normal(size=(3, 3)),
                                          np.ones(3) / 3)
        rho = bloch_model().state(xi)
        E, V = estimator_moments(rho, Pi, xi)
        mc = monte_carlo_moments(rho, Pi, 100_000, 11, xi)
        assert np.all(np.abs(mc.E_hat - E) <= 4 * mc.stderr)
        assert np.all(np.abs(mc.V_hat - V) <= 4 * mc.stderr_V)

    def test_single_outcome(self):
        Pi = DiscreteEstimator([I2], [[0.4]])
        mc = monte_carlo_moments(DensityOperator(I2 / 2), Pi, 1000, 1)
        assert_allclose(mc.V_hat, 0)
        assert_allclose(mc.stderr, 0)

    def test_deterministic_seed(self):
        p = np.array([0.2, 0.5, 0.3])
        a = sample_counts(p, 12345, 99)
        assert np.array_equal(a, sample_counts(p, 12345, 99))
        assert a.sum() == 12345
        assert not np.array_equal(a, sample_counts(p, 12345, 100))

    def test_bad_probabilities(self):
        with pytest.raises(ValueError):
            sample_counts([0.5, 0.6], 10, 0)
        with pytest.raises(ValueError):
            sample_counts([0.5, 0.5], 0, 0)

    def test_quadratic_helper(self):
        counts = np.array([3, 1])
        mean, se = monte_carlo_quadratic(counts, np.array([[1.0], [-1.0]]), [1.0], [0.0])
        assert mean == 1.0 and se == 0.0
