"""
Unit tests for designs, the true regression parameter and per-degree GLS
"""

import math

import numpy as np
import pytest

from models.errors import (
    DimensionMismatchError,
    GridExactnessError,
    NotPositiveDefiniteError,
    SingularDesignError,
)
from models.lrd_process import CoefficientSample
from models.manifold_harmonics import QuadratureGrid, SphPoint, real_harmonic
from models.regression import (
    BetaCoefficients,
    DesignMatrix,
    ToeplitzCov,
    anova_design,
    degree_sums,
    gls_fit,
    gls_loss,
    ols_residuals,
    oracle_covariances,
    reconstruct_beta,
    synthesize_response,
    true_beta,
)


def identity_covs(degrees, N):
    first_row = np.zeros(N)
    first_row[0] = 1.0
    return {n: ToeplitzCov(first_row, n) for n in degrees}


def zero_errors(N, degrees):
    return CoefficientSample(np.zeros((N, sum(2 * n + 1 for n in degrees))), degrees)


class TestDesign:
    """ANOVA and general design matrices"""

    def test_anova_blocks(self):
        """Blocks of N // p rows; the last absorbs the remainder"""
        design = anova_design(52, 5)
        assert design.X.shape == (52, 5)
        assert np.all(design.X.sum(axis=1) == 1.0)
        assert design.X.sum(axis=0).tolist() == [10, 10, 10, 10, 12]

    def test_anova_needs_enough_samples(self):
        """N below p is refused"""
        with pytest.raises(DimensionMismatchError):
            anova_design(3, 5)

    def test_rank_deficient(self):
        """Rank-deficient designs are refused"""
        X = np.ones((10, 2))
        with pytest.raises(SingularDesignError):
            DesignMatrix(X)

    def test_design_is_read_only_copy(self):
        """Designs copy and freeze their input"""
        X = np.eye(3)
        design = DesignMatrix(X)
        X[0, 0] = 5.0
        assert design.X[0, 0] == 1.0
        assert not design.X.flags.writeable


class TestTrueBeta:
    """Beta-density regression coefficients"""

    def test_golden_value(self):
        """Pinned coefficient value"""
        beta = true_beta(30, 5)
        assert math.isclose(beta.coefficient(15, 1), 0.261894713, rel_tol=1e-8)

    def test_shape_and_endpoints(self):
        """Shape and vanishing endpoints"""
        beta = true_beta(30, 5)
        assert beta.b.shape == (30, 5)
        assert beta.degrees == tuple(range(1, 31))
        # Beta(2, rho) vanishes at both ends of [0, 1]
        assert np.allclose(beta.b[0], 0.0)
        assert np.allclose(beta.b[-1], 0.0)

    def test_weighted_norm(self):
        """Norm weighted by eigenspace dimension"""
        beta = BetaCoefficients(np.array([[1.0], [2.0]]), (1, 2))
        assert beta.weighted_norm().tolist() == [1.0 * 3 + 4.0 * 5]


class TestSynthesis:
    """Response synthesis"""

    def test_response_repeats_mean_over_orders(self):
        """Every order carries the same mean X beta_n"""
        design = anova_design(20, 2)
        beta = BetaCoefficients(np.array([[1.0, 2.0], [3.0, 4.0]]), (1, 2))
        Y = synthesize_response(design, beta, zero_errors(20, (1, 2)))
        assert np.allclose(Y.degree_block(1)[:10], 1.0)
        assert np.allclose(Y.degree_block(2)[10:], 4.0)

    def test_mismatched_sizes(self, small_response):
        """Design and errors must agree on N"""
        design, beta, _ = small_response
        with pytest.raises(DimensionMismatchError):
            synthesize_response(anova_design(30, 3), beta, zero_errors(20, beta.degrees))


class TestToeplitzCov:
    """Toeplitz covariances"""

    def test_not_positive_definite(self):
        """Factorization failure raises NotPositiveDefiniteError"""
        cov = ToeplitzCov(np.array([1.0, 2.0]), 1)
        with pytest.raises(NotPositiveDefiniteError):
            cov.solve(np.ones(2))

    def test_invalid_first_row(self):
        """A non-positive variance is refused"""
        with pytest.raises(NotPositiveDefiniteError):
            ToeplitzCov(np.array([0.0, 0.1]), 1)

    def test_solve(self):
        """solve inverts the matrix"""
        cov = ToeplitzCov(np.array([2.0, 0.5, 0.1]), 1)
        rhs = np.array([1.0, -1.0, 0.5])
        assert np.allclose(cov.matrix() @ cov.solve(rhs), rhs)

    def test_aggregated_scaling(self):
        """Aggregated covariance divides by delta squared"""
        cov = ToeplitzCov.aggregated(2, np.array([25.0, 5.0]), 5)
        assert np.allclose(cov.first_row, [1.0, 0.2])


class TestGls:
    """Per-degree generalized least squares"""

    def test_identity_covariance_is_ols(self, rng):
        """Identity covariance reproduces OLS"""
        for _ in range(50):
            N, p = 30, 3
            design = DesignMatrix(rng.standard_normal((N, p)))
            Y = CoefficientSample(rng.standard_normal((N, 8)), (1, 2))
            fit = gls_fit(design, Y, identity_covs((1, 2), N))
            Q, R = np.linalg.qr(design.X)
            expected = np.linalg.solve(R, Q.T @ Y.aggregate())
            assert np.allclose(fit.beta_hat, expected.T, rtol=0, atol=1e-10)

    def test_noise_free_recovery(self, small_spec):
        """Noise-free responses return the true beta"""
        design = anova_design(40, 3)
        beta = true_beta(small_spec.M, 3)
        Y = synthesize_response(design, beta, zero_errors(40, small_spec.degrees))
        fit = gls_fit(design, Y, oracle_covariances(small_spec, 40))
        assert np.allclose(fit.beta_hat, beta.b, atol=1e-10)
        assert fit.loss < 1e-12

    def test_variance_formula(self, small_spec, small_response):
        """Variance equals (X^T Lambda^-1 X)^-1"""
        design, _, Y = small_response
        covs = oracle_covariances(small_spec, Y.N)
        fit = gls_fit(design, Y, covs)
        for i, n in enumerate(fit.degrees):
            Lambda = covs[n].matrix()
            expected = np.linalg.inv(design.X.T @ np.linalg.solve(Lambda, design.X))
            assert np.allclose(fit.variance[i], expected, rtol=1e-8)

    def test_loss_matches_recomputation(self, small_spec, small_response):
        """Reported loss matches gls_loss"""
        design, _, Y = small_response
        covs = oracle_covariances(small_spec, Y.N)
        fit = gls_fit(design, Y, covs)
        assert math.isclose(fit.loss, gls_loss(design, Y, fit.beta_hat, covs), rel_tol=1e-10)

    def test_threaded_fit_matches_serial(self, small_spec, small_response):
        """Threads do not change the estimate"""
        design, _, Y = small_response
        covs = oracle_covariances(small_spec, Y.N)
        assert np.array_equal(gls_fit(design, Y, covs).beta_hat, gls_fit(design, Y, covs, workers=3).beta_hat)

    def test_missing_covariance(self, small_response):
        """Every degree needs a covariance"""
        design, _, Y = small_response
        covs = identity_covs((1, 2), Y.N)
        with pytest.raises(DimensionMismatchError):
            gls_fit(design, Y, covs)

    def test_ols_residuals_are_orthogonal(self, small_response):
        """OLS residuals are orthogonal to the design"""
        design, _, Y = small_response
        residuals = ols_residuals(design, Y)
        assert np.allclose(design.X.T @ residuals.data, 0.0, atol=1e-10)

    @pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
    def test_invariant_to_covariance_scale(self, small_spec, small_response, c):
        """Scaling Lambda_n by c keeps beta_hat and scales variance by c"""
        design, _, Y = small_response
        covs = oracle_covariances(small_spec, Y.N)
        scaled = {n: ToeplitzCov(c * cov.first_row, n) for n, cov in covs.items()}
        base, rescaled = gls_fit(design, Y, covs), gls_fit(design, Y, scaled)
        assert np.allclose(rescaled.beta_hat, base.beta_hat, rtol=0, atol=1e-11)
        assert np.allclose(rescaled.variance, c * base.variance, rtol=1e-10)
        assert math.isclose(rescaled.loss, base.loss / c, rel_tol=1e-10)

    def test_loss_is_minimal_at_estimate(self, small_spec, small_response, rng):
        """Perturbing beta_hat never lowers the loss"""
        design, _, Y = small_response
        covs = oracle_covariances(small_spec, Y.N)
        fit = gls_fit(design, Y, covs)
        for scale in (1e-4, 1e-2, 1.0):
            for _ in range(20):
                perturbed = fit.beta_hat + scale * rng.standard_normal(fit.beta_hat.shape)
                assert gls_loss(design, Y, perturbed, covs) >= fit.loss * (1.0 - 1e-12)


class TestReconstruction:
    """Surfaces of beta on the sphere"""

    def test_single_coefficient_is_zonal_sum(self):
        """One coefficient gives its degree sum of harmonics"""
        beta = BetaCoefficients(np.array([[0.0], [1.0]]), (1, 2))
        grid = QuadratureGrid.gauss_legendre(8)
        field = reconstruct_beta(beta, grid)[:, 0]
        assert np.allclose(field, degree_sums([2], grid.colatitude, grid.longitude)[:, 0])

        x = SphPoint(float(grid.colatitude[7]), float(grid.longitude[7]))
        expected = sum(real_harmonic(2, k, x) for k in range(1, 6))
        assert math.isclose(field[7], expected, abs_tol=1e-12)

    def test_grid_too_coarse(self):
        """The grid must integrate the truncation degree exactly"""
        with pytest.raises(GridExactnessError):
            reconstruct_beta(true_beta(10, 1), QuadratureGrid.gauss_legendre(8))
