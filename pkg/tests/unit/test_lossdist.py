"""
Unit tests for FFT conditional loss distributions and their oracles.
"""

import numpy as np
import pytest

from src.core.errors import ModelDomainError, NumericalFailure
from src.portfolio.lossdist import (
    ConditionalLossDist,
    LossLattice,
    binomial_cdf_oracle,
    binomial_pmf_oracle,
    binomial_tail_oracle,
    cdf_prob,
    char_function_samples,
    conditional_tail_probs,
    convolution_oracle,
    invert_to_pmf,
    loss_distribution,
    tail_prob,
)
from src.portfolio.model import FactorSample, conditional_default_probs, exposure_profile, sample_factors
from src.portfolio.presets import preset
from src.sampling.distributions import RandomStream


class TestLossLattice:

    def test_fft_size(self):
        assert LossLattice(np.ones(250)).fft_size == 256
        assert LossLattice(np.ones(256)).fft_size == 512
        assert LossLattice(exposure_profile("five_level", 250)).fft_size == 4096

    def test_grouped_total(self):
        lattice = LossLattice(np.array([1, 4]), np.array([3, 2]))
        assert lattice.total == 11
        assert lattice.size == 2

    def test_invalid(self):
        with pytest.raises(ModelDomainError):
            LossLattice(np.array([1.5]))
        with pytest.raises(ModelDomainError):
            LossLattice(np.array([1, 2]), np.array([0, 1]))


class TestFFT:

    def test_binomial_case(self):
        dist = loss_distribution(np.full(250, 0.1), np.ones(250, dtype=int))
        oracle = binomial_pmf_oracle(250, 0.1)
        assert np.max(np.abs(dist.pmf[:251] - oracle.pmf)) <= 1e-10
        for tau in (20, 10, 5):
            assert abs(float(cdf_prob(dist, tau)) - binomial_cdf_oracle(250, 0.1, tau)) <= 1e-10

    def test_five_level_against_convolution(self):
        exposures = exposure_profile("five_level", 250)
        p = np.full(250, 0.1)
        dist = loss_distribution(p, exposures)
        oracle = convolution_oracle(p, exposures)
        assert np.max(np.abs(dist.pmf[:dist.total + 1] - oracle.pmf)) <= 1e-10
        assert float(cdf_prob(dist, 200)) == pytest.approx(1.29e-1, abs=1e-3)

    def test_heterogeneous_probabilities(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0.0, 0.3, 40)
        exposures = rng.integers(0, 6, 40)
        dist = loss_distribution(p, exposures)
        oracle = convolution_oracle(p, exposures)
        assert np.allclose(dist.pmf[:dist.total + 1], oracle.pmf, atol=1e-12)

    def test_grouped_matches_ungrouped(self):
        p = np.array([0.05, 0.2])
        grouped = LossLattice(np.array([2, 3]), np.array([10, 5]))
        flat = LossLattice(np.repeat([2, 3], [10, 5]))
        b_grouped = char_function_samples(p, grouped)
        b_flat = char_function_samples(np.repeat(p, [10, 5]), flat)
        assert np.allclose(b_grouped, b_flat, atol=1e-12)

    def test_zero_factor(self):
        # the p = 1/2 group vanishes at t = pi
        lattice = LossLattice(np.array([1, 1]), np.array([1, 2]))
        b = char_function_samples(np.array([1.0, 0.5]), lattice)
        dist = invert_to_pmf(b, total=lattice.total)
        assert np.allclose(dist.pmf[:4], [0.0, 0.25, 0.5, 0.25])

    def test_extreme_probabilities(self):
        dist = loss_distribution(np.array([0.0, 1.0, 1.0]), np.array([1, 2, 3]))
        assert float(tail_prob(dist, 4)) == pytest.approx(1.0)
        assert float(tail_prob(dist, 5)) == pytest.approx(0.0, abs=1e-12)

    def test_batched(self):
        lattice = LossLattice(np.ones(10, dtype=int))
        p = np.stack([np.full(10, 0.1), np.full(10, 0.4)])
        dist = invert_to_pmf(char_function_samples(p, lattice), total=lattice.total)
        assert dist.pmf.shape == (2, 16)
        assert tail_prob(dist, 3)[1] == pytest.approx(binomial_tail_oracle(10, 0.4, 3), abs=1e-12)

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ModelDomainError):
            char_function_samples(np.array([1.2]), LossLattice(np.array([1])))
        with pytest.raises(ModelDomainError):
            char_function_samples(np.array([0.1, 0.2]), LossLattice(np.array([1])))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ModelDomainError):
            invert_to_pmf(np.ones(6))

    def test_rejects_invalid_characteristic_function(self):
        b = np.ones(8, dtype=complex)
        b[1] = 5.0
        with pytest.raises(NumericalFailure):
            invert_to_pmf(b)

    def test_negative_mass_tolerance(self):
        # q recovered from b = N * ifft(q) exactly, up to roundoff
        target = np.zeros(8)
        target[0], target[1] = 1.0 + 1e-11, -1e-11
        with pytest.raises(NumericalFailure):
            invert_to_pmf(8 * np.fft.ifft(target))

        target[0], target[1] = 1.0 + 1e-13, -1e-13
        dist = invert_to_pmf(8 * np.fft.ifft(target))
        assert dist.pmf.min() == 0.0
        assert dist.pmf[0] == pytest.approx(1.0, abs=1e-12)


class TestTailProb:

    def setup_method(self):
        self.dist = loss_distribution(np.full(20, 0.3), np.ones(20, dtype=int))

    def test_boundaries(self):
        assert float(tail_prob(self.dist, -1)) == 1.0
        assert float(tail_prob(self.dist, 20)) == 0.0
        with pytest.raises(ModelDomainError):
            tail_prob(self.dist, 21)

    def test_complement(self):
        for tau in (0, 5, 12):
            assert float(tail_prob(self.dist, tau) + cdf_prob(self.dist, tau)) == pytest.approx(1.0, abs=1e-12)

    def test_short_pmf(self):
        with pytest.raises(ModelDomainError):
            ConditionalLossDist(pmf=np.ones(3), source="test", total=3)


class TestConditionalTailProbs:

    def test_matches_per_row_oracle(self):
        p = preset("three_factor_base", exposures="two_level", n=40)
        model = p.model
        sample = sample_factors(model, p.shock, RandomStream(3).generator(), 20)
        rho = conditional_tail_probs(model, sample, 15, max_cells=1_000)
        probs = conditional_default_probs(model, sample)
        for row in range(20):
            oracle = convolution_oracle(probs[row], model.exposures)
            assert rho[row] == pytest.approx(oracle.pmf[16:].sum(), abs=1e-10)

    def test_trivial_levels(self):
        p = preset("one_factor_t", n=20)
        sample = sample_factors(p.model, p.shock, RandomStream(1).generator(), 5)
        assert np.array_equal(conditional_tail_probs(p.model, sample, -1), np.ones(5))
        assert np.array_equal(conditional_tail_probs(p.model, sample, 20), np.zeros(5))
        with pytest.raises(ModelDomainError):
            conditional_tail_probs(p.model, sample, 21)

    def test_degenerate_rows(self):
        model = preset("fft_check", n=30).model
        sample = FactorSample(z=np.zeros((3, 1)), w=np.ones((3, 2)), q=np.empty((3, 0)))
        rho = conditional_tail_probs(model, sample, 2)
        assert np.allclose(rho, binomial_tail_oracle(30, 0.1, 2))
