"""
Unit tests for random streams, samplers, densities and special functions.
"""

import numpy as np
import pytest
from scipy import stats

from src.core.errors import ModelDomainError
from src.sampling.distributions import (
    GammaParams,
    MvnParams,
    RandomStream,
    digamma,
    log_gamma_fn,
    log_pdf_gamma,
    log_pdf_mvn,
    log_pdf_normal,
    normal_cdf,
    normal_hazard,
    normal_tail,
    regularized_lower_gamma,
    regularized_upper_gamma,
    sample_gamma,
    sample_mvn,
    sample_std_normal,
)


class TestRandomStream:
    """Reproducibility of counter-based streams."""

    def test_same_key_same_draws(self):
        a = RandomStream(7, 3).generator().standard_normal(5)
        b = RandomStream(7, 3).generator().standard_normal(5)
        assert np.array_equal(a, b)

    def test_different_streams_differ(self):
        a = RandomStream(7, 3).generator().standard_normal(5)
        b = RandomStream(7, 4).generator().standard_normal(5)
        assert not np.array_equal(a, b)

    def test_substream(self):
        assert RandomStream(1, 10).substream(5) == RandomStream(1, 15)

    def test_rejects_negative_seed(self):
        with pytest.raises(ModelDomainError):
            RandomStream(-1)


class TestParams:

    def test_mvn_rejects_indefinite(self):
        with pytest.raises(ModelDomainError):
            MvnParams(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_mvn_rejects_shape_mismatch(self):
        with pytest.raises(ModelDomainError):
            MvnParams(np.zeros(3), np.eye(2))

    def test_gamma_rejects_nonpositive(self):
        with pytest.raises(ModelDomainError):
            GammaParams(0.0, 1.0)
        with pytest.raises(ModelDomainError):
            GammaParams(1.0, -1.0)

    def test_gamma_moments(self):
        law = GammaParams(4.0, 0.5)
        assert law.mean == pytest.approx(8.0)
        assert law.variance == pytest.approx(16.0)


class TestSamplers:

    def test_gamma_sample_mean(self):
        law = GammaParams(4.0, 0.5)
        x = sample_gamma(law, RandomStream(1).generator(), 200_000)
        assert x.mean() == pytest.approx(8.0, rel=0.01)

    def test_small_shape_gamma(self):
        x = sample_gamma(GammaParams(0.3, 2.0), RandomStream(2).generator(), 100_000)
        assert np.all(x > 0)
        assert x.mean() == pytest.approx(0.15, rel=0.03)

    def test_mvn_sample_covariance(self):
        cov = np.array([[1.0, 0.5], [0.5, 2.0]])
        x = sample_mvn(MvnParams(np.array([1.0, -1.0]), cov), RandomStream(3).generator(), 200_000)
        assert x.shape == (200_000, 2)
        assert np.allclose(x.mean(axis=0), [1.0, -1.0], atol=0.02)
        assert np.allclose(np.cov(x.T), cov, atol=0.03)

    def test_mvn_single_draw(self):
        x = sample_mvn(MvnParams.standard(3), RandomStream(4).generator())
        assert x.shape == (3,)


class TestDensities:

    def test_normal_matches_scipy(self):
        x = np.linspace(-3, 3, 7)
        assert np.allclose(log_pdf_normal(x, 0.5, 2.0), stats.norm.logpdf(x, 0.5, 2.0))

    def test_mvn_matches_scipy(self):
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        params = MvnParams(np.array([0.1, -0.2]), cov)
        x = np.array([[0.0, 0.0], [1.0, 2.0], [-1.5, 0.5]])
        expected = stats.multivariate_normal(params.mean, cov).logpdf(x)
        assert np.allclose(log_pdf_mvn(x, params), expected)
        assert log_pdf_mvn(x[1], params) == pytest.approx(expected[1])

    def test_gamma_matches_scipy(self):
        x = np.array([0.5, 3.0, 12.0])
        expected = stats.gamma(a=4.0, scale=2.0).logpdf(x)
        assert np.allclose(log_pdf_gamma(x, GammaParams(4.0, 0.5)), expected)

    def test_gamma_outside_support(self):
        with pytest.raises(ModelDomainError):
            log_pdf_gamma(np.array([1.0, 0.0]), GammaParams(2.0, 1.0))


class TestSpecialFunctions:

    def test_normal_tail_far_out(self):
        assert normal_tail(10.0) == pytest.approx(7.619853024160527e-24, rel=1e-10)

    def test_hazard_far_out(self):
        # phi(x) / (1 - Phi(x)) approaches x for large x
        assert normal_hazard(40.0) == pytest.approx(40.0, rel=1e-3)
        assert np.isfinite(normal_hazard(60.0))

    def test_gamma_tails(self):
        assert regularized_upper_gamma(4.0, 0.5, 10.0) == pytest.approx(stats.gamma(4.0, scale=2.0).sf(10.0))
        assert regularized_lower_gamma(4.0, 0.5, 5.0) == pytest.approx(stats.gamma(4.0, scale=2.0).cdf(5.0))

    def test_gamma_tail_domain(self):
        with pytest.raises(ModelDomainError):
            regularized_upper_gamma(4.0, 0.5, 0.0)

    def test_normal_cdf(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_tail(3.0) == pytest.approx(1.349898031630095e-3, rel=1e-12)
        assert normal_tail(4.0) == pytest.approx(3.167124183311998e-05, rel=1e-12)
        assert normal_cdf(-2.0) == pytest.approx(normal_tail(2.0), rel=1e-14)

    def test_digamma(self):
        assert digamma(1.0) == pytest.approx(-0.5772156649015329, rel=1e-14)
        x = np.array([0.3, 2.5, 17.0])
        assert np.allclose(digamma(x + 1.0), digamma(x) + 1.0 / x, rtol=1e-13)
        with pytest.raises(ModelDomainError):
            digamma(0.0)

    def test_log_gamma(self):
        assert log_gamma_fn(5.0) == pytest.approx(np.log(24.0), rel=1e-14)
        assert log_gamma_fn(0.5) == pytest.approx(0.5 * np.log(np.pi), rel=1e-14)
        with pytest.raises(ModelDomainError):
            log_gamma_fn(-1.0)

    def test_regularized_gamma_pair(self):
        assert regularized_lower_gamma(1.0, 1.0, 1.0) == pytest.approx(1.0 - np.exp(-1.0), rel=1e-14)
        a = np.array([0.5, 8.0, 30.0])
        total = regularized_lower_gamma(4.0, 0.5, a) + regularized_upper_gamma(4.0, 0.5, a)
        assert np.allclose(total, 1.0, atol=1e-14)
        with pytest.raises(ModelDomainError):
            regularized_lower_gamma(0.0, 1.0, 1.0)


class TestStdNormalSampler:

    def setup_method(self):
        self.draws = sample_std_normal(RandomStream(1, 0).generator(), 1_000_000)

    def test_moments(self):
        assert abs(self.draws.mean()) <= 0.004
        assert 0.995 <= self.draws.var() <= 1.005

    def test_reproducible(self):
        again = sample_std_normal(RandomStream(1, 0).generator(), 1_000_000)
        assert np.array_equal(self.draws, again)

    def test_scalar_draw(self):
        assert np.ndim(sample_std_normal(RandomStream(1, 0).generator())) == 0
