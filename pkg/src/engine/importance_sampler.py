"""
Two-phase importance sampling for portfolio tail probabilities P(L > tau).

Phase 1 draws a pilot under P, evaluates the conditional tail probability of
every pilot draw on the loss lattice and solves the first-order tilting
conditions for the factor mean and the Gamma-space shock parameters. Phase 2
samples the factors under the tilted laws and averages the conditional tail
probability times the likelihood ratio.

Tilts are stored in sampling coordinates: Z ~ N(mu, Sigma) and the j-th
Gamma-space variable ~ Gamma(alpha_j - theta_j, beta_j + eta_j). Q_j is the
Gamma-space variable of a t-copula shock and W_j that of a direct Gamma shock.
"""

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..core.errors import ModelDomainError, NumericalFailure
from ..observability.logging import log_estimate, log_tilt_search
from ..observability.metrics import metrics_collector
from ..observability.tracing import traced
from ..portfolio.lossdist import LossLattice, conditional_tail_probs
from ..portfolio.model import (
    FactorSample,
    PortfolioModel,
    ShockSpec,
    gamma_laws,
    sample_factors,
    simulate_losses,
)
from ..sampling.distributions import MvnParams, log_pdf_gamma, log_pdf_mvn
from ..tilting.families import GammaFamily, MvnMeanFamily, ProductFamily
from ..tilting.framework import Pilot, SufficientFamily, foc_residual, solve_restricted
from ..tilting.newton import DEFAULT_EPS, DEFAULT_MAX_ITER, TiltSolution, squared_norm
from ..utils.parallel import CRUDE_PHASE, ESTIMATION_PHASE, PILOT_PHASE, map_chunks
from ..utils.stats import EstimatorStats, summarize

logger = structlog.get_logger(__name__)

TILT_BLOCKS = ("mu", "theta", "eta")
# Refinement pilots use their own stream ids inside the pilot phase.
REFINE_STRIDE = 1 << 24


@dataclass
class EngineTilt:
    """Sampling-law parameters of phase 2."""
    mu: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    sigma_tilt: Optional[np.ndarray] = None
    active: Tuple[str, ...] = ()

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        self.active = tuple(self.active)

    @classmethod
    def zero(cls, model: PortfolioModel, shock: ShockSpec, active: Sequence[str] = ()) -> "EngineTilt":
        return cls(np.zeros(model.d), np.zeros(shock.n_gamma), np.zeros(shock.n_gamma), active=tuple(active))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EngineTilt":
        return cls(
            mu=data["mu"],
            theta=data.get("theta", []),
            eta=data.get("eta", []),
            active=tuple(data.get("active", ())),
        )

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.mu) or np.any(self.theta) or np.any(self.eta))

    def validate(self, model: PortfolioModel, shock: ShockSpec):
        if self.sigma_tilt is not None:
            raise ModelDomainError("covariance tilting of Z is not supported by the portfolio engine")
        if self.mu.shape != (model.d,):
            raise ModelDomainError(f"mu must have {model.d} entries, got {self.mu.size}")
        if self.theta.shape != (shock.n_gamma,) or self.eta.shape != (shock.n_gamma,):
            raise ModelDomainError(f"theta and eta must have {shock.n_gamma} entries")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.eta))):
            raise ModelDomainError("tilting parameters must be finite")
        gamma_laws(shock, self.theta, self.eta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu.tolist(),
            "theta": self.theta.tolist(),
            "eta": self.eta.tolist(),
            "active": list(self.active),
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Sample sizes, solver settings and the loss level of one experiment.

    Exactly one of ``b`` (tau = round(n b)) and ``tau`` is given.
    """
    B1: int = 5_000
    B2: int = 10_000
    eps: float = DEFAULT_EPS
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    tilt: Tuple[str, ...] = ("mu", "eta")
    b: Optional[float] = None
    tau: Optional[int] = None
    threads: int = 1
    chunk_size: int = 1024
    refine_rounds: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tilt", tuple(self.tilt))
        if self.B1 < 1 or self.B2 < 1:
            raise ModelDomainError("B1 and B2 must be at least 1")
        if not self.eps > 0:
            raise ModelDomainError("eps must be positive")
        if self.max_iter < 1:
            raise ModelDomainError("max_iter must be at least 1")
        if self.seed < 0:
            raise ModelDomainError("seed must be non-negative")
        if (self.b is None) == (self.tau is None):
            raise ModelDomainError("give exactly one of b and tau")
        unknown = set(self.tilt) - set(TILT_BLOCKS) - {"sigma"}
        if unknown:
            raise ModelDomainError(f"unknown tilt blocks {sorted(unknown)} (known: {', '.join(TILT_BLOCKS)})")
        if self.threads < 1 or self.chunk_size < 1 or self.refine_rounds < 0:
            raise ModelDomainError("threads and chunk_size must be positive, refine_rounds non-negative")

    def resolve_tau(self, model: PortfolioModel) -> int:
        tau = int(round(model.n * self.b)) if self.tau is None else int(self.tau)
        if not -1 <= tau <= model.total_exposure:
            raise ModelDomainError(f"tau={tau} outside [-1, {model.total_exposure}]")
        return tau


@dataclass
class EstimateReport:
    """Outcome of one estimator arm."""
    arm: str
    estimate: float
    variance: float
    std_error: float
    vr_factor: float
    samples: int
    tau: int
    newton_iterations: int = 0
    search_time: float = 0.0
    estimate_time: float = 0.0
    converged: Optional[bool] = None
    tilt: Optional[Dict[str, Any]] = None

    @classmethod
    def from_stats(cls, arm: str, stats: EstimatorStats, tau: int, **extra: Any) -> "EstimateReport":
        return cls(
            arm=arm,
            estimate=stats.mean,
            variance=stats.variance,
            std_error=stats.std_error,
            vr_factor=stats.vr_factor,
            samples=stats.samples,
            tau=tau,
            **extra,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "arm": self.arm,
            "estimate": self.estimate,
            "variance": self.variance,
            "std_error": self.std_error,
            "vr_factor": self.vr_factor,
            "samples": self.samples,
            "tau": self.tau,
            "newton_iterations": self.newton_iterations,
            "search_time_s": self.search_time,
            "estimate_time_s": self.estimate_time,
            "converged": self.converged,
            "tilt": self.tilt,
        }


# --------------------------------------------------------------------------
# Coordinates
# --------------------------------------------------------------------------

def engine_family(model: PortfolioModel, shock: ShockSpec) -> ProductFamily:
    """Pilot family: mean tilt of Z times one Gamma family per Gamma-space variable."""
    components: List[SufficientFamily] = [MvnMeanFamily(model.factor_cov)]
    components += [GammaFamily(law.shape, law.rate) for law in shock.base_gamma_laws()]
    return ProductFamily(components, name="portfolio")


def to_engine_tilt(model: PortfolioModel, family: SufficientFamily, delta: np.ndarray,
                   active: Sequence[str] = ()) -> EngineTilt:
    """Family parameters to sampling coordinates.

    The mean tilt theta of Z gives mu = Sigma theta; a Gamma family tilt
    (t, e) samples Gamma(alpha + t, beta - e), so the engine stores (-t, -e).
    """
    theta, eta = family.split(delta)
    return EngineTilt(
        mu=model.factor_cov @ theta[:model.d],
        theta=-theta[model.d:],
        eta=-eta,
        active=tuple(active),
    )


def to_family_delta(model: PortfolioModel, tilt: EngineTilt) -> np.ndarray:
    theta_z = np.linalg.solve(model.factor_cov, tilt.mu)
    return np.concatenate([theta_z, -tilt.theta, -tilt.eta])


def log_likelihood_ratio(model: PortfolioModel, shock: ShockSpec, tilt: EngineTilt, sample: FactorSample) -> np.ndarray:
    """ln r1(z) + ln r2(q), the log of dP/dQ at each sampled factor draw."""
    out = np.zeros(sample.size)
    if np.any(tilt.mu):
        tilted = MvnParams(tilt.mu, model.factor_cov)
        out += log_pdf_mvn(sample.z, model.factor_law) - log_pdf_mvn(sample.z, tilted)
    base = shock.base_gamma_laws()
    tilted_laws = gamma_laws(shock, tilt.theta, tilt.eta)
    for j, (law, tilted_law) in enumerate(zip(base, tilted_laws)):
        if not (tilt.theta[j] or tilt.eta[j]):
            continue
        out += log_pdf_gamma(sample.q[:, j], law) - log_pdf_gamma(sample.q[:, j], tilted_law)
    return out


# --------------------------------------------------------------------------
# Sampling helpers
# --------------------------------------------------------------------------

def _draw_with_tails(
    model: PortfolioModel,
    shock: ShockSpec,
    config: ExperimentConfig,
    tau: int,
    lattice: LossLattice,
    phase_base: int,
    total: int,
    tilt: Optional[EngineTilt] = None,
) -> Tuple[FactorSample, np.ndarray]:
    def run(chunk):
        rng = chunk.stream.generator()
        sample = sample_factors(model, shock, rng, chunk.size, tilt)
        return sample, conditional_tail_probs(model, sample, tau, lattice)

    parts = map_chunks(run, total, config.seed, phase_base, config.chunk_size, config.threads)
    sample = FactorSample(
        z=np.vstack([s.z for s, _ in parts]),
        w=np.vstack([s.w for s, _ in parts]),
        q=np.vstack([s.q for s, _ in parts]),
    )
    return sample, np.concatenate([rho for _, rho in parts])


def _family_samples(sample: FactorSample) -> tuple:
    return (sample.z,) + tuple(sample.q[:, j] for j in range(sample.q.shape[1]))


# --------------------------------------------------------------------------
# Phase 1
# --------------------------------------------------------------------------

def componentwise_newton(
    family: SufficientFamily,
    residual,
    blocks: Sequence[Tuple[str, np.ndarray]],
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    start: Optional[np.ndarray] = None,
) -> TiltSolution:
    """Gauss-Seidel sweeps of one damped Newton step per block.

    Converged only when g'g < eps on every block.
    """
    delta = family.zero() if start is None else np.array(start, dtype=float)

    def block_norms(point: np.ndarray) -> Dict[str, float]:
        g = residual(point)
        return {name: squared_norm(g[mask]) for name, mask in blocks}

    norms = block_norms(delta)
    history = [sum(norms.values())]
    sweeps = 0
    while any(value >= eps for value in norms.values()) and sweeps < max_iter:
        moved = False
        for name, mask in blocks:
            step = solve_restricted(family, residual, mask, eps=eps, max_iter=1, start=delta)
            moved = moved or step.iterations > 0
            delta = step.delta
        sweeps += 1
        norms = block_norms(delta)
        history.append(sum(norms.values()))
        logger.debug("Gauss-Seidel sweep", sweep=sweeps, residual=history[-1], blocks=norms)
        if not moved:
            logger.warning("Tilt search stalled", sweep=sweeps, residual=history[-1])
            break

    theta, eta = family.split(delta)
    return TiltSolution(
        theta=theta,
        eta=eta,
        iterations=sweeps,
        final_residual=history[-1],
        converged=all(value < eps for value in norms.values()),
        history=history,
    )


def search_tilt_parameters(
    model: PortfolioModel,
    shock: ShockSpec,
    config: ExperimentConfig,
    lattice: Optional[LossLattice] = None,
) -> Tuple[EngineTilt, TiltSolution]:
    """Phase 1: locate the tilt minimizing the pilot estimate of the second moment.

    The returned ``TiltSolution`` is in family coordinates; the ``EngineTilt``
    holds the corresponding sampling laws.
    """
    shock.validate_for(model)
    if "sigma" in config.tilt:
        raise ModelDomainError("covariance tilting of Z is not supported by the portfolio engine")
    tau = config.resolve_tau(model)
    lattice = LossLattice.for_model(model) if lattice is None else lattice
    family = engine_family(model, shock)
    blocks = [(name, family.select([name])) for name in TILT_BLOCKS
              if name in config.tilt and name in family.subsets]
    active = tuple(name for name, _ in blocks)

    start = time.perf_counter()
    with traced("engine.search", pilot_size=config.B1, tau=tau, blocks=",".join(active)):
        delta = family.zero()
        solution = TiltSolution(*family.split(delta), iterations=0, final_residual=0.0, converged=True)
        if blocks:
            sample, rho = _draw_with_tails(model, shock, config, tau, lattice, PILOT_PHASE, config.B1)
            pilot = Pilot.from_samples(family, _family_samples(sample), rho)
            logger.info("Pilot drawn", size=pilot.size, hits=pilot.hits, tau=tau)
            solution = componentwise_newton(
                family, lambda d: foc_residual(family, pilot, d), blocks,
                eps=config.eps, max_iter=config.max_iter,
            )
            for round_index in range(config.refine_rounds):
                proposal = to_engine_tilt(model, family, solution.delta, active)
                sample, rho = _draw_with_tails(
                    model, shock, config, tau, lattice,
                    PILOT_PHASE + (round_index + 1) * REFINE_STRIDE, config.B1, proposal,
                )
                pilot = Pilot.from_samples(
                    family, _family_samples(sample), rho,
                    log_base_ratio=log_likelihood_ratio(model, shock, proposal, sample),
                )
                previous = solution.iterations
                solution = componentwise_newton(
                    family, lambda d: foc_residual(family, pilot, d), blocks,
                    eps=config.eps, max_iter=config.max_iter, start=solution.delta,
                )
                solution.iterations += previous
            metrics_collector.record_samples("pilot", config.B1 * (1 + config.refine_rounds))
    duration = time.perf_counter() - start

    tilt = to_engine_tilt(model, family, solution.delta, active)
    metrics_collector.record_phase("search", duration)
    metrics_collector.record_search(solution.iterations)
    log_tilt_search(solution.converged, solution.iterations, solution.final_residual, tilt.to_dict())
    return tilt, solution


# --------------------------------------------------------------------------
# Phase 2 and the crude baseline
# --------------------------------------------------------------------------

def estimate_tail(
    model: PortfolioModel,
    shock: ShockSpec,
    tilt: EngineTilt,
    config: ExperimentConfig,
    lattice: Optional[LossLattice] = None,
) -> EstimateReport:
    """Phase 2: mean of rho(z, w) r1(z) r2(w) over B2 tilted draws."""
    shock.validate_for(model)
    tilt.validate(model, shock)
    tau = config.resolve_tau(model)
    lattice = LossLattice.for_model(model) if lattice is None else lattice

    def run(chunk):
        rng = chunk.stream.generator()
        sample = sample_factors(model, shock, rng, chunk.size, tilt)
        rho = conditional_tail_probs(model, sample, tau, lattice)
        log_r = log_likelihood_ratio(model, shock, tilt, sample)
        if not np.all(np.isfinite(log_r)):
            raise NumericalFailure("non-finite likelihood ratio; the tilt is at the edge of its domain")
        values = np.zeros(chunk.size)
        hit = rho > 0
        values[hit] = rho[hit] * np.exp(log_r[hit])
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("likelihood ratio overflow in the estimation phase")
        return values

    start = time.perf_counter()
    with traced("engine.estimate", samples=config.B2, tau=tau):
        values = np.concatenate(map_chunks(run, config.B2, config.seed, ESTIMATION_PHASE,
                                           config.chunk_size, config.threads))
    duration = time.perf_counter() - start

    report = EstimateReport.from_stats("is", summarize(values), tau, estimate_time=duration, tilt=tilt.to_dict())
    metrics_collector.record_samples("estimation", config.B2)
    metrics_collector.record_phase("estimation", duration)
    log_estimate("is", report.estimate, report.std_error, report.samples, duration)
    return report


def crude_estimate(
    model: PortfolioModel,
    shock: ShockSpec,
    config: ExperimentConfig,
    conditional: bool = False,
    lattice: Optional[LossLattice] = None,
) -> EstimateReport:
    """Plain Monte Carlo under P.

    By default every obligor is simulated and 1{L > tau} is averaged, with the
    variance taken as p(1 - p). With ``conditional`` the FFT tail probability
    rho(z, w) is averaged instead, a reference rather than a baseline.
    """
    shock.validate_for(model)
    tau = config.resolve_tau(model)
    lattice = LossLattice.for_model(model) if conditional and lattice is None else lattice

    def run(chunk):
        rng = chunk.stream.generator()
        sample = sample_factors(model, shock, rng, chunk.size)
        if conditional:
            return conditional_tail_probs(model, sample, tau, lattice)
        return (simulate_losses(model, sample, rng) > tau).astype(float)

    arm = "conditional" if conditional else "crude"
    start = time.perf_counter()
    with traced("engine.crude", samples=config.B2, tau=tau, conditional=conditional):
        values = np.concatenate(map_chunks(run, config.B2, config.seed, CRUDE_PHASE,
                                           config.chunk_size, config.threads))
    duration = time.perf_counter() - start

    stats = summarize(values)
    if not conditional:
        stats = EstimatorStats(stats.mean, stats.mean * (1.0 - stats.mean), stats.samples)
    report = EstimateReport.from_stats(arm, stats, tau, estimate_time=duration)
    metrics_collector.record_samples(arm, config.B2)
    metrics_collector.record_phase(arm, duration)
    log_estimate(arm, report.estimate, report.std_error, report.samples, duration)
    return report


def importance_sampling_estimate(
    model: PortfolioModel,
    shock: ShockSpec,
    config: ExperimentConfig,
) -> EstimateReport:
    """Both phases; the report carries search diagnostics and timings."""
    lattice = LossLattice.for_model(model)
    start = time.perf_counter()
    tilt, solution = search_tilt_parameters(model, shock, config, lattice)
    search_time = time.perf_counter() - start
    report = estimate_tail(model, shock, tilt, config, lattice)
    report.newton_iterations = solution.iterations
    report.search_time = search_time
    report.converged = solution.converged
    return report
