"""
Sufficient exponential tilting framework.

A family tilts its base law P by ``exp(theta.h1(x) + eta.h2(x) - psi(theta, eta))``.
For a payoff ``r`` the second moment of the importance-sampling estimator is

    G(theta, eta) = E_P[r(X)^2 exp(-theta.h1 - eta.h2 + psi)]

which is convex, and its minimizer solves ``grad psi = E_Qbar[(h1, h2)]`` where
the conjugate measure Qbar has density proportional to
``r^2 exp(-theta.h1 - eta.h2)`` with respect to P. All expectations under Qbar
are self-normalized weighted means over a pilot sample.

Parameters are handled as one flat vector ``delta = concat(theta, eta)``.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
import structlog

from ..core.errors import DegeneratePilotError, ModelDomainError
from .newton import DEFAULT_EPS, DEFAULT_MAX_ITER, TiltSolution, newton_solve

logger = structlog.get_logger(__name__)

Samples = Any
Payoff = Callable[[Samples], np.ndarray]

DOMAIN_MARGIN = 1e-6
# Distance kept from an open domain edge when a parameter is pinned to it.
EDGE_OFFSET = 4 * DOMAIN_MARGIN


class SufficientFamily(ABC):
    """An exponential family tilted along its sufficient statistics."""

    name: str = "family"

    def __init__(self, dim_theta: int, dim_eta: int):
        self.dim_theta = dim_theta
        self.dim_eta = dim_eta

    @property
    def dim(self) -> int:
        return self.dim_theta + self.dim_eta

    @abstractmethod
    def h1(self, x: Samples) -> np.ndarray:
        """Sufficient statistics paired with theta, shape (B, dim_theta)."""

    @abstractmethod
    def h2(self, x: Samples) -> np.ndarray:
        """Sufficient statistics paired with eta, shape (B, dim_eta)."""

    @abstractmethod
    def psi(self, theta: np.ndarray, eta: np.ndarray) -> float:
        """Cumulant function ln E_P[exp(theta.h1 + eta.h2)]."""

    @abstractmethod
    def grad_psi(self, theta: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Analytic gradient of psi, concatenated (d/dtheta, d/deta)."""

    @abstractmethod
    def in_domain(self, theta: np.ndarray, eta: np.ndarray, margin: float = DOMAIN_MARGIN) -> bool:
        """Whether the parameters are strictly inside the steepness boundary."""

    @abstractmethod
    def sample_base(self, rng: np.random.Generator, size: int) -> Samples:
        """Draw from P."""

    @abstractmethod
    def sample_tilted(self, theta: np.ndarray, eta: np.ndarray, rng: np.random.Generator, size: int) -> Samples:
        """Draw from the tilted law Q_{theta, eta}."""

    # ------------------------------------------------------------------

    @property
    def subsets(self) -> Dict[str, List[int]]:
        """Named groups of delta entries that can be tilted together."""
        return {}

    @property
    def lower_edges(self) -> Dict[int, float]:
        """delta entries whose optimum may sit on a lower domain edge, mapped to the pinned value."""
        return {}

    def zero(self) -> np.ndarray:
        return np.zeros(self.dim)

    def split(self, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        delta = np.asarray(delta, dtype=float)
        return delta[:self.dim_theta], delta[self.dim_theta:]

    def stats(self, x: Samples) -> np.ndarray:
        """All sufficient statistics, shape (B, dim)."""
        return np.hstack([self.h1(x), self.h2(x)])

    def delta_in_domain(self, delta: np.ndarray, margin: float = DOMAIN_MARGIN) -> bool:
        if not np.all(np.isfinite(delta)):
            return False
        return self.in_domain(*self.split(delta), margin=margin)

    def check_domain(self, theta: np.ndarray, eta: np.ndarray):
        if not self.in_domain(theta, eta, margin=0.0):
            raise ModelDomainError(
                f"{self.name}: parameters theta={np.round(theta, 6).tolist()}, "
                f"eta={np.round(eta, 6).tolist()} lie outside the tilting domain"
            )

    def psi_delta(self, delta: np.ndarray) -> float:
        return self.psi(*self.split(delta))

    def grad_psi_delta(self, delta: np.ndarray) -> np.ndarray:
        return self.grad_psi(*self.split(delta))

    def log_likelihood_ratio(self, x: Samples, delta: np.ndarray) -> np.ndarray:
        """ln dP/dQ_delta evaluated at samples."""
        delta = np.asarray(delta, dtype=float)
        if not np.any(delta):
            return np.zeros(self.stats(x).shape[0])
        return -(self.stats(x) @ delta) + self.psi_delta(delta)

    def select(self, names: Sequence[str]) -> np.ndarray:
        """Boolean mask over delta for the named subsets."""
        mask = np.zeros(self.dim, dtype=bool)
        groups = self.subsets
        for name in names:
            if name not in groups:
                raise ModelDomainError(f"{self.name}: unknown tilt subset '{name}' (known: {sorted(groups)})")
            mask[groups[name]] = True
        return mask


@dataclass
class Pilot:
    """Pilot sample reduced to what the conjugate measure needs.

    Only samples with a positive payoff are kept; ``size`` remembers the full
    pilot size so that plain means over P stay correctly normalized.
    """
    stats: np.ndarray
    log_payoff_sq: np.ndarray
    log_base_ratio: np.ndarray
    index: np.ndarray
    size: int

    @classmethod
    def from_values(
        cls,
        stats: np.ndarray,
        payoff: np.ndarray,
        log_base_ratio: Optional[np.ndarray] = None,
    ) -> "Pilot":
        payoff = np.asarray(payoff, dtype=float)
        stats = np.asarray(stats, dtype=float)
        if stats.ndim == 1:
            stats = stats[:, None]
        size = payoff.shape[0]
        if size == 0:
            raise DegeneratePilotError(0, "pilot is empty")
        if np.any(~np.isfinite(payoff)) or np.any(payoff < 0):
            raise ModelDomainError("payoff values must be finite and non-negative")
        keep = np.flatnonzero(payoff > 0)
        if keep.size == 0:
            raise DegeneratePilotError(size)
        base = np.zeros(size) if log_base_ratio is None else np.asarray(log_base_ratio, dtype=float)
        return cls(
            stats=stats[keep],
            log_payoff_sq=2.0 * np.log(payoff[keep]),
            log_base_ratio=base[keep],
            index=keep,
            size=size,
        )

    @classmethod
    def from_samples(
        cls,
        family: SufficientFamily,
        samples: Samples,
        payoff: np.ndarray,
        log_base_ratio: Optional[np.ndarray] = None,
    ) -> "Pilot":
        return cls.from_values(family.stats(samples), payoff, log_base_ratio)

    @property
    def hits(self) -> int:
        return self.index.size


@dataclass
class ConjugateWeights:
    """Log weights of the kept pilot samples under the conjugate measure."""
    log_weights: np.ndarray
    log_normalizer: float

    def normalized(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))


def conjugate_weights(pilot: Pilot, delta: np.ndarray) -> ConjugateWeights:
    """log w_i = 2 ln r(x_i) - delta.T(x_i) (+ ln dP/dR for proposal pilots)."""
    log_w = pilot.log_payoff_sq - pilot.stats @ np.asarray(delta, dtype=float) + pilot.log_base_ratio
    return ConjugateWeights(
        log_weights=log_w,
        log_normalizer=float(logsumexp(log_w) - np.log(pilot.size)),
    )


def conjugate_expectation(pilot: Pilot, delta: np.ndarray, h: Optional[np.ndarray] = None) -> np.ndarray:
    """Self-normalized mean of ``h`` under the conjugate measure.

    ``h`` defaults to the pilot's sufficient statistics; otherwise it is given
    either for every pilot sample or for the kept samples only.
    """
    weights = conjugate_weights(pilot, delta).normalized()
    if h is None:
        values = pilot.stats
    else:
        values = np.asarray(h, dtype=float)
        if values.shape[0] == pilot.size and pilot.size != pilot.hits:
            values = values[pilot.index]
    return weights @ values


def log_objective_G(family: SufficientFamily, pilot: Pilot, delta: np.ndarray) -> float:
    family.check_domain(*family.split(delta))
    return family.psi_delta(delta) + conjugate_weights(pilot, delta).log_normalizer


def objective_G(family: SufficientFamily, pilot: Pilot, delta: np.ndarray) -> float:
    """Pilot estimate of the estimator's second moment at ``delta`` (common random numbers)."""
    return float(np.exp(log_objective_G(family, pilot, delta)))


def objective_G_with_error(family: SufficientFamily, pilot: Pilot, delta: np.ndarray) -> Tuple[float, float]:
    """G together with its Monte Carlo standard error over the pilot."""
    family.check_domain(*family.split(delta))
    log_w = conjugate_weights(pilot, delta).log_weights + family.psi_delta(delta)
    values = np.zeros(pilot.size)
    values[:pilot.hits] = np.exp(log_w)
    mean = values.mean()
    std_error = values.std(ddof=1) / np.sqrt(pilot.size) if pilot.size > 1 else 0.0
    return float(mean), float(std_error)


def foc_residual(family: SufficientFamily, pilot: Pilot, delta: np.ndarray) -> np.ndarray:
    """grad psi(delta) - E_Qbar[(h1, h2)]; zero at the optimal tilt."""
    family.check_domain(*family.split(delta))
    return family.grad_psi_delta(delta) - conjugate_expectation(pilot, delta)


def solve_restricted(
    family: SufficientFamily,
    residual_full: Callable[[np.ndarray], np.ndarray],
    mask: np.ndarray,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    start: Optional[np.ndarray] = None,
    extra_domain: Optional[Callable[[np.ndarray], bool]] = None,
    edges: Optional[Mapping[int, float]] = None,
) -> TiltSolution:
    """Newton over the active entries of ``mask``; returns the full (theta, eta).

    If the interior search fails, active entries listed in ``edges`` (by
    default ``family.lower_edges``) are pinned and the remaining entries are
    solved again. The pinned point is kept only where G does not decrease
    into the domain, so for a convex G it is the constrained minimizer.
    """
    mask = np.asarray(mask, dtype=bool)
    full = family.zero() if start is None else np.array(start, dtype=float)
    solution = _newton_on_mask(family, residual_full, mask, full, eps, max_iter, extra_domain)
    if solution.converged:
        return solution

    edges = family.lower_edges if edges is None else edges
    pinned = {index: value for index, value in edges.items() if mask[index]}
    if not pinned:
        return solution
    edge_start = full.copy()
    edge_start[list(pinned)] = list(pinned.values())
    if not family.delta_in_domain(edge_start) or (extra_domain is not None and not extra_domain(edge_start)):
        return solution

    free = mask.copy()
    free[list(pinned)] = False
    if free.any():
        edge = _newton_on_mask(family, residual_full, free, edge_start, eps, max_iter, extra_domain)
    else:
        edge = TiltSolution(*family.split(edge_start), iterations=0, final_residual=0.0, converged=True)
    slopes = np.asarray(residual_full(edge.delta), dtype=float)[list(pinned)]
    if not edge.converged or np.any(slopes < -np.sqrt(eps)):
        return solution

    logger.debug("Tilt pinned to domain edge", entries=sorted(pinned), slopes=slopes.tolist())
    return TiltSolution(
        theta=edge.theta,
        eta=edge.eta,
        iterations=solution.iterations + edge.iterations,
        final_residual=edge.final_residual,
        converged=True,
        history=solution.history + edge.history,
        boundary=True,
    )


def _newton_on_mask(
    family: SufficientFamily,
    residual_full: Callable[[np.ndarray], np.ndarray],
    mask: np.ndarray,
    full: np.ndarray,
    eps: float,
    max_iter: int,
    extra_domain: Optional[Callable[[np.ndarray], bool]],
) -> TiltSolution:
    def embed(active: np.ndarray) -> np.ndarray:
        delta = full.copy()
        delta[mask] = active
        return delta

    def in_domain(active: np.ndarray) -> bool:
        delta = embed(active)
        if not family.delta_in_domain(delta):
            return False
        return extra_domain is None or extra_domain(delta)

    solution = newton_solve(
        lambda active: residual_full(embed(active))[mask],
        full[mask],
        eps=eps,
        max_iter=max_iter,
        in_domain=in_domain,
    )
    theta, eta = family.split(embed(solution.theta))
    return TiltSolution(
        theta=theta,
        eta=eta,
        iterations=solution.iterations,
        final_residual=solution.final_residual,
        converged=solution.converged,
        history=solution.history,
    )


def optimal_tilt(
    family: SufficientFamily,
    pilot: Pilot,
    mask: Optional[np.ndarray] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    start: Optional[np.ndarray] = None,
) -> TiltSolution:
    """Minimize the pilot estimate of G over the active entries by solving its first-order conditions."""
    mask = np.ones(family.dim, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return solve_restricted(
        family,
        lambda delta: foc_residual(family, pilot, delta),
        mask,
        eps=eps,
        max_iter=max_iter,
        start=start,
    )


# --------------------------------------------------------------------------
# Plain estimators used to compare tilts
# --------------------------------------------------------------------------

def tilted_summands(
    family: SufficientFamily,
    payoff: Payoff,
    delta: np.ndarray,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """Per-sample IS summands payoff * dP/dQ under Q_delta."""
    theta, eta = family.split(delta)
    family.check_domain(theta, eta)
    samples = family.sample_tilted(theta, eta, rng, size)
    values = np.asarray(payoff(samples), dtype=float)
    positive = values > 0
    out = np.zeros(size)
    if np.any(positive):
        log_lr = family.log_likelihood_ratio(samples, delta)
        out[positive] = values[positive] * np.exp(log_lr[positive])
    return out


def crude_summands(family: SufficientFamily, payoff: Payoff, rng: np.random.Generator, size: int) -> np.ndarray:
    return np.asarray(payoff(family.sample_base(rng, size)), dtype=float)
