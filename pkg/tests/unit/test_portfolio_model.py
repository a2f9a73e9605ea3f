"""
Unit tests for the portfolio model, shock laws and presets.
"""

import numpy as np
import pytest

from src.core.errors import ModelDomainError
from src.portfolio.model import (
    DefaultDirection,
    FactorSample,
    PortfolioModel,
    ShockKind,
    ShockSpec,
    conditional_default_probs,
    exposure_profile,
    gamma_laws,
    sample_factors,
    simulate_losses,
)
from src.portfolio.presets import PRESET_NAMES, factor_covariance, preset
from src.sampling.distributions import RandomStream, normal_cdf, normal_tail


def small_model(direction="above"):
    return PortfolioModel(
        loadings=np.array([[0.3, 0.2], [0.5, 0.0], [0.1, 0.6]]),
        thresholds=np.array([1.0, 1.5, 0.5]),
        exposures=np.array([1, 2, 3]),
        idio_std=1.5,
        direction=direction,
    )


class TestPortfolioModel:

    def test_loading_norm(self):
        with pytest.raises(ModelDomainError, match="obligor 0"):
            PortfolioModel(loadings=np.array([[0.9, 0.9]]), thresholds=1.0, exposures=1)

    def test_non_integer_exposure(self):
        with pytest.raises(ModelDomainError):
            PortfolioModel(loadings=np.array([[0.5]]), thresholds=1.0, exposures=np.array([1.5]))

    def test_idio_loading(self):
        model = small_model()
        assert np.allclose(model.idio_loading ** 2 + np.sum(model.loadings ** 2, axis=1), 1.0)
        assert model.total_exposure == 6
        assert (model.n, model.d) == (3, 2)

    def test_groups(self):
        base = preset("three_factor_base").model
        assert base.groups.size == 1
        assert base.groups.counts.tolist() == [250]
        five = preset("three_factor_base", exposures="five_level").model
        assert five.groups.size == 5
        assert five.groups.counts.sum() == 250

    def test_conditional_probs_at_origin(self):
        model = small_model()
        sample = FactorSample(z=np.zeros((1, 2)), w=np.ones((1, 3)), q=np.empty((1, 0)))
        expected = normal_tail(model.thresholds / (model.idio_loading * 1.5))
        assert np.allclose(conditional_default_probs(model, sample)[0], expected)

    def test_conditional_probs_below(self):
        model = small_model(direction="below")
        sample = FactorSample(z=np.zeros((1, 2)), w=np.ones((1, 3)), q=np.empty((1, 0)))
        expected = normal_cdf(model.thresholds / (model.idio_loading * 1.5))
        assert np.allclose(conditional_default_probs(model, sample)[0], expected)
        assert model.direction == DefaultDirection.BELOW

    def test_fully_systematic_obligor(self):
        model = PortfolioModel(loadings=np.array([[1.0]]), thresholds=0.5, exposures=1)
        sample = FactorSample(z=np.array([[0.2], [0.8]]), w=np.ones((2, 2)), q=np.empty((2, 0)))
        assert conditional_default_probs(model, sample)[:, 0].tolist() == [0.0, 1.0]

    def test_simulated_losses_match_conditional_mean(self):
        model = small_model()
        size = 40_000
        sample = FactorSample(z=np.tile([0.5, -0.2], (size, 1)), w=np.ones((size, 3)), q=np.empty((size, 0)))
        losses = simulate_losses(model, sample, RandomStream(4).generator())
        first = FactorSample(sample.z[:1], sample.w[:1], sample.q[:1])
        expected = conditional_default_probs(model, first)[0]
        assert losses.mean() == pytest.approx(float(expected @ model.exposures), abs=0.03)

    def test_exposure_profiles(self):
        assert exposure_profile("two_level", 4).tolist() == [1, 1, 4, 4]
        assert sorted(set(exposure_profile("five_level", 250).tolist())) == [1, 4, 9, 16, 25]
        assert exposure_profile("five_level", 250).sum() == 2750
        with pytest.raises(ModelDomainError):
            exposure_profile("three_level", 10)


class TestShocks:

    def test_t_copula_sampling(self):
        model = preset("three_factor_base").model
        shock = ShockSpec.t_copula([8, 6, 4, 4])
        sample = sample_factors(model, shock, RandomStream(1).generator(), 1000)
        assert sample.z.shape == (1000, 3)
        assert sample.q.shape == (1000, 4)
        assert np.allclose(sample.w, np.array([8.0, 6.0, 4.0, 4.0]) / sample.q)

    def test_shared_shock(self):
        model = preset("one_factor_t").model
        shock = ShockSpec.t_copula([4.0], shared=True)
        sample = sample_factors(model, shock, RandomStream(1).generator(), 100)
        assert sample.q.shape == (100, 1)
        assert np.array_equal(sample.w[:, 0], sample.w[:, 1])

    def test_degenerate_shock(self):
        shock = ShockSpec.degenerate()
        assert shock.n_gamma == 0
        assert shock.kind == ShockKind.DEGENERATE
        assert np.array_equal(shock.to_w(np.empty((5, 0)), 2), np.ones((5, 3)))

    def test_component_count(self):
        model = preset("three_factor_base").model
        with pytest.raises(ModelDomainError, match="d\\+1=4"):
            ShockSpec.t_copula([4, 4]).validate_for(model)

    def test_invalid_parameters(self):
        with pytest.raises(ModelDomainError):
            ShockSpec.t_copula([0.0])
        with pytest.raises(ModelDomainError):
            ShockSpec.gamma_direct([1.0, 2.0], [1.0])

    def test_gamma_laws(self):
        shock = ShockSpec.t_copula([4.0, 8.0])
        laws = gamma_laws(shock, theta=np.array([0.5, 0.0]), eta=np.array([0.1, 0.0]))
        assert (laws[0].shape, laws[0].rate) == pytest.approx((1.5, 0.6))
        assert (laws[1].shape, laws[1].rate) == (4.0, 0.5)
        with pytest.raises(ModelDomainError, match="outside the domain"):
            gamma_laws(shock, theta=np.array([2.5, 0.0]), eta=np.zeros(2))


class TestPresets:

    def test_names(self):
        assert set(PRESET_NAMES) == {"one_factor_t", "three_factor_base", "three_factor_gig",
                                     "cdx_ig_8factor", "fft_check"}
        with pytest.raises(ModelDomainError):
            preset("nope")

    def test_one_factor_defaults(self):
        p = preset("one_factor_t")
        assert (p.model.n, p.model.d) == (250, 1)
        assert p.shock.shared
        assert p.constants.reference == {0.25: 8.13e-3}
        assert preset("one_factor_t", nu=8).constants.reference == {0.25: 2.42e-4}

    def test_model_overrides_drop_reference(self):
        assert preset("three_factor_base").constants.reference[0.3] == 3.08e-3
        assert preset("three_factor_base", n=100).constants.reference == {}
        assert preset("three_factor_base", n=100).model.n == 100

    def test_bad_override(self):
        with pytest.raises(ModelDomainError):
            preset("cdx_ig_8factor", sigmas=(1.0,))

    def test_factor_covariance(self):
        cov = factor_covariance([1.0, 0.8, 0.5], 0.5)
        assert cov[0, 0] == 1.0
        assert cov[1, 2] == pytest.approx(0.5 * 0.8 * 0.5)
        assert np.allclose(cov, cov.T)

    def test_gig_preset(self):
        p = preset("three_factor_gig")
        assert p.shock.kind == ShockKind.GAMMA_DIRECT
        assert p.shock.alpha == (4.0, 3.0, 2.0, 2.0)
        assert p.constants.tilt == ("mu", "theta")

    def test_cdx_preset(self):
        p = preset("cdx_ig_8factor")
        assert p.model.d == 8
        assert p.model.direction == DefaultDirection.BELOW
        assert np.allclose(np.sum(p.model.loadings ** 2, axis=1), 0.23)

    def test_fft_check_preset(self):
        p = preset("fft_check")
        sample = FactorSample(z=np.zeros((1, 1)), w=np.ones((1, 2)), q=np.empty((1, 0)))
        assert np.allclose(conditional_default_probs(p.model, sample), 0.1)
        assert p.constants.tau(p.model.n) == 20
