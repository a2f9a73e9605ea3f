"""
Unit tests for the sufficient tilting framework: cumulants, pilots, the
second-moment objective and its first-order conditions.
"""

import numpy as np
import pytest
from scipy import integrate, stats

from src.core.errors import DegeneratePilotError, ModelDomainError
from src.sampling.distributions import RandomStream, normal_tail
from src.tilting.families import (
    GammaFamily,
    MvnFamily,
    MvnMeanFamily,
    NormalMixtureFamily,
    StdNormalFamily,
    normal_event,
    normal_tail_solution,
)
from src.tilting.framework import (
    Pilot,
    conjugate_expectation,
    foc_residual,
    objective_G,
    objective_G_with_error,
    optimal_tilt,
    tilted_summands,
)


def numerical_gradient(f, delta, h=1e-5):
    grad = np.zeros(delta.size)
    for i in range(delta.size):
        up, down = delta.copy(), delta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


FAMILIES = [
    (StdNormalFamily(), np.array([0.7, 0.2])),
    (MvnFamily(2), np.array([0.3, -0.4, 0.1, -0.05, 0.05])),
    (MvnMeanFamily(np.array([[1.0, 0.4], [0.4, 2.0]])), np.array([0.5, -0.3])),
    (GammaFamily(4.0, 0.5), np.array([0.5, 0.1])),
    (NormalMixtureFamily(4.0, 0.5), np.array([0.4, -0.5, 0.1, 0.2])),
]


class TestCumulants:
    """Cumulant functions and their analytic gradients."""

    @pytest.mark.parametrize("family,delta", FAMILIES)
    def test_grad_psi_matches_finite_differences(self, family, delta):
        assert family.delta_in_domain(delta)
        expected = numerical_gradient(family.psi_delta, delta)
        assert np.allclose(family.grad_psi_delta(delta), expected, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("family,delta", FAMILIES)
    def test_psi_vanishes_at_zero(self, family, delta):
        assert family.psi_delta(family.zero()) == pytest.approx(0.0, abs=1e-12)

    def test_normal_psi_by_quadrature(self):
        family = StdNormalFamily()
        theta, eta = 0.7, 0.2
        value, _ = integrate.quad(
            lambda x: np.exp(theta * x + eta * x * x) * stats.norm.pdf(x),
            -40, 40, points=[0.0], epsabs=0, epsrel=1e-12, limit=200,
        )
        assert family.psi([theta], [eta]) == pytest.approx(np.log(value), rel=1e-8)

    def test_gamma_psi_by_quadrature(self):
        family = GammaFamily(4.0, 0.5)
        theta, eta = 0.5, 0.1
        law = stats.gamma(a=4.0, scale=2.0)
        value, _ = integrate.quad(
            lambda x: x ** theta * np.exp(eta * x) * law.pdf(x),
            0, 400, points=[10.0], epsabs=0, epsrel=1e-12, limit=200,
        )
        assert family.psi([theta], [eta]) == pytest.approx(np.log(value), rel=1e-8)

    def test_normal_mean_var_round_trip(self):
        theta, eta = StdNormalFamily.from_mean_var(1.5, 0.25)
        assert StdNormalFamily.to_mean_var(theta, eta) == pytest.approx((1.5, 0.25))

    def test_mvn_mean_cov_round_trip(self):
        family = MvnFamily(2)
        theta, eta = np.array([0.3, -0.4]), np.array([0.1, -0.05, 0.05])
        mean, cov = family.to_mean_cov(theta, eta)
        theta2, eta2 = family.from_mean_cov(mean, cov)
        assert np.allclose(theta2, theta)
        assert np.allclose(eta2, eta)

    def test_domain(self):
        assert not StdNormalFamily().in_domain([0.0], [0.5])
        assert not GammaFamily(2.0, 1.0).in_domain([-2.5], [0.0])
        assert not GammaFamily(2.0, 1.0).in_domain([0.0], [1.0])
        with pytest.raises(ModelDomainError):
            StdNormalFamily().check_domain(np.array([0.0]), np.array([0.6]))

    def test_mixture_subsets(self):
        family = NormalMixtureFamily(4.0, 0.5)
        assert family.subsets == {"mu": [0], "theta": [1], "sigma": [2], "eta": [3]}
        assert family.select(["mu", "eta"]).tolist() == [True, False, False, True]
        with pytest.raises(ModelDomainError):
            family.select(["rho"])


class TestPilot:

    def setup_method(self):
        self.family = StdNormalFamily()
        rng = RandomStream(5).generator()
        self.samples = self.family.sample_base(rng, 100_000)
        self.payoff = normal_event("tail", 2.0)(self.samples)
        self.pilot = Pilot.from_samples(self.family, self.samples, self.payoff)

    def test_keeps_only_hits(self):
        assert self.pilot.hits == int(self.payoff.sum())
        assert self.pilot.size == 100_000

    def test_degenerate_pilot(self):
        with pytest.raises(DegeneratePilotError):
            Pilot.from_samples(self.family, self.samples, np.zeros(self.samples.size))

    def test_negative_payoff(self):
        with pytest.raises(ModelDomainError):
            Pilot.from_values(np.zeros((2, 2)), np.array([1.0, -1.0]))

    def test_objective_at_zero_is_hit_rate(self):
        assert objective_G(self.family, self.pilot, self.family.zero()) == pytest.approx(self.payoff.mean())

    def test_objective_with_error(self):
        value, error = objective_G_with_error(self.family, self.pilot, np.array([1.0, 0.0]))
        assert value == pytest.approx(objective_G(self.family, self.pilot, np.array([1.0, 0.0])))
        assert 0 < error < value

    def test_conjugate_expectation_at_zero(self):
        expected = self.family.stats(self.samples[self.payoff > 0]).mean(axis=0)
        assert np.allclose(conjugate_expectation(self.pilot, self.family.zero()), expected)

    def test_midpoint_convexity(self):
        """The pilot estimate of G is convex along random segments."""
        rng = np.random.default_rng(17)
        passed = 0
        for _ in range(100):
            p1 = np.array([rng.uniform(-1, 3), rng.uniform(-0.4, 0.4)])
            p2 = np.array([rng.uniform(-1, 3), rng.uniform(-0.4, 0.4)])
            mid = 0.5 * (p1 + p2)
            g_mid, se_mid = objective_G_with_error(self.family, self.pilot, mid)
            g1 = objective_G(self.family, self.pilot, p1)
            g2 = objective_G(self.family, self.pilot, p2)
            passed += g_mid <= 0.5 * (g1 + g2) + 3 * se_mid
        assert passed >= 95

    def test_sampled_tilt_matches_closed_form(self):
        mask = self.family.select(["mu", "sigma"])
        sampled = optimal_tilt(self.family, self.pilot, mask, eps=1e-10, max_iter=50)
        exact = normal_tail_solution(2.0, ("mu", "sigma"))
        assert sampled.converged
        assert sampled.boundary and exact.solution.boundary
        mu_s, var_s = StdNormalFamily.to_mean_var(sampled.theta, sampled.eta)
        mu_e, var_e = StdNormalFamily.to_mean_var(exact.solution.theta, exact.solution.eta)
        assert mu_s == pytest.approx(mu_e, abs=0.05)
        assert var_s == pytest.approx(var_e, abs=0.05)

    def test_foc_residual_at_edge_solution(self):
        """For a right tail the variance entry sits on eta = -1/2, where G still increases inward."""
        solution = optimal_tilt(self.family, self.pilot, eps=1e-10, max_iter=50)
        residual = foc_residual(self.family, self.pilot, solution.delta)
        assert solution.converged
        assert solution.boundary
        assert residual[0] ** 2 < 1e-10
        assert residual[1] > -1e-5

    def test_foc_residual_vanishes_at_interior_solution(self):
        samples = self.family.sample_base(RandomStream(5, 1).generator(), 100_000)
        payoff = normal_event("tail", -1.0)(samples)
        pilot = Pilot.from_samples(self.family, samples, payoff)
        solution = optimal_tilt(self.family, pilot, eps=1e-10, max_iter=50)
        residual = foc_residual(self.family, pilot, solution.delta)
        assert solution.converged
        assert not solution.boundary
        assert float(residual @ residual) < 1e-10


class TestEstimators:

    def test_zero_tilt_likelihood_ratio_is_exactly_one(self):
        family = NormalMixtureFamily(4.0, 0.5)
        samples = family.sample_base(RandomStream(1).generator(), 1000)
        assert np.array_equal(family.log_likelihood_ratio(samples, family.zero()), np.zeros(1000))

    def test_unbiased_under_random_tilts(self):
        """Tilted estimates of P(X > 1.5) agree with the exact value for random valid tilts."""
        family = StdNormalFamily()
        payoff = normal_event("tail", 1.5)
        exact = float(normal_tail(1.5))
        rng = np.random.default_rng(3)
        for k in range(10):
            delta = np.array([rng.uniform(0.0, 2.0), rng.uniform(-0.1, 0.3)])
            values = tilted_summands(family, payoff, delta, RandomStream(9, k).generator(), 40_000)
            std_error = values.std(ddof=1) / np.sqrt(values.size)
            assert abs(values.mean() - exact) <= 4 * std_error

    def test_tilted_outside_domain(self):
        family = StdNormalFamily()
        with pytest.raises(ModelDomainError):
            tilted_summands(family, normal_event("tail", 1.0), np.array([0.0, 0.7]),
                            RandomStream(1).generator(), 10)
