"""
Conditional loss distributions on the integer loss lattice.

Given the factors, obligors default independently, so the characteristic
function of the total loss is a product of Bernoulli factors. Sampling it at
N equally spaced points and applying one DFT recovers P(L = k) for every k on
{0, ..., C}. Binomial and direct-convolution oracles back the FFT path in tests
and in the fft-check benchmark.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binom
import structlog

from ..core.errors import ModelDomainError, NumericalFailure
from .model import FactorSample, PortfolioModel, conditional_default_probs

logger = structlog.get_logger(__name__)

IMAG_TOLERANCE = 1e-8
SUM_TOLERANCE = 1e-10
NEGATIVE_TOLERANCE = 1e-12
# Upper bound on samples x groups x lattice points held in memory at once.
MAX_CELLS = 1 << 24


@dataclass(frozen=True)
class LossLattice:
    """Integer exposures, optionally grouped with a multiplicity per entry."""
    exposures: np.ndarray
    counts: Optional[np.ndarray] = None
    total: int = field(init=False)
    fft_size: int = field(init=False)

    def __post_init__(self):
        exposures = np.atleast_1d(np.asarray(self.exposures))
        if np.any(exposures < 0) or not np.all(np.equal(np.mod(exposures, 1), 0)):
            raise ModelDomainError("exposures must be non-negative integers")
        exposures = exposures.astype(np.int64)
        counts = np.ones_like(exposures) if self.counts is None else np.asarray(self.counts, dtype=np.int64)
        if counts.shape != exposures.shape or np.any(counts < 1):
            raise ModelDomainError("counts must be positive and match the exposures")
        total = int(np.sum(exposures * counts))
        object.__setattr__(self, "exposures", exposures)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", total)
        object.__setattr__(self, "fft_size", 1 << total.bit_length())

    @classmethod
    def for_model(cls, model: PortfolioModel) -> "LossLattice":
        """Lattice over the model's obligor groups."""
        groups = model.groups
        return cls(model.exposures[groups.representatives], groups.counts)

    @property
    def size(self) -> int:
        return self.exposures.size


@dataclass
class ConditionalLossDist:
    """pmf over k = 0..len-1; batched distributions stack along leading axes."""
    pmf: np.ndarray
    source: str
    total: int

    def __post_init__(self):
        if self.pmf.shape[-1] <= self.total:
            raise ModelDomainError("pmf is shorter than the loss lattice")


def char_function_samples(p: np.ndarray, lattice: LossLattice) -> np.ndarray:
    """b_m = prod_l (1 - p_l + p_l e^{i t c_l})^{m_l} at t = 2 pi m / N.

    ``p`` has one entry per lattice entry, optionally with leading batch axes.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != lattice.size:
        raise ModelDomainError(f"expected {lattice.size} probabilities, got {p.shape[-1]}")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ModelDomainError("default probabilities must lie in [0, 1]")

    n_points = lattice.fft_size
    t = 2.0 * np.pi * np.arange(n_points) / n_points
    # Exposures enter modulo N; this keeps the phases small.
    phase = np.exp(1j * np.outer(lattice.exposures % n_points, t))
    factors = 1.0 - p[..., None] + p[..., None] * phase

    if np.all(lattice.counts == 1) and lattice.size <= 1000:
        return np.prod(factors, axis=-2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_factors = np.log(factors)
        log_b = np.einsum("g,...gm->...m", lattice.counts.astype(float), log_factors.real)
        phase_b = np.einsum("g,...gm->...m", lattice.counts.astype(float), log_factors.imag)
    # A zero factor makes the whole product vanish.
    return np.where(np.isneginf(log_b), 0.0, np.exp(log_b) * np.exp(1j * phase_b))


def invert_to_pmf(b: np.ndarray, total: Optional[int] = None) -> ConditionalLossDist:
    """q_k = (1/N) sum_m b_m e^{-i 2 pi k m / N}, one radix-2 FFT per row."""
    b = np.asarray(b, dtype=complex)
    n_points = b.shape[-1]
    if n_points < 1 or n_points & (n_points - 1):
        raise ModelDomainError(f"characteristic function length {n_points} is not a power of two")

    q = np.fft.fft(b, axis=-1) / n_points
    worst_imag = float(np.max(np.abs(q.imag))) if q.size else 0.0
    if worst_imag > IMAG_TOLERANCE:
        raise NumericalFailure(f"inverse DFT left an imaginary residual of {worst_imag:.3e}")
    pmf = q.real

    sums = pmf.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SUM_TOLERANCE):
        raise NumericalFailure(f"loss pmf sums to {float(np.max(np.abs(sums - 1.0))):.3e} away from 1")
    if np.any(pmf < -NEGATIVE_TOLERANCE):
        raise NumericalFailure(f"loss pmf has an entry of {float(pmf.min()):.3e}")
    pmf = np.clip(pmf, 0.0, None)
    return ConditionalLossDist(pmf=pmf, source="fft", total=n_points - 1 if total is None else total)


def _check_tau(dist: ConditionalLossDist, tau: int) -> int:
    tau = int(tau)
    if not -1 <= tau <= dist.total:
        raise ModelDomainError(f"tau={tau} outside [-1, {dist.total}]")
    return tau


def tail_prob(dist: ConditionalLossDist, tau: int) -> np.ndarray:
    """P(L > tau) summed over k in (tau, C]; tau = -1 is the certain event."""
    tau = _check_tau(dist, tau)
    if tau == -1:
        return np.ones(dist.pmf.shape[:-1]) if dist.pmf.ndim > 1 else np.float64(1.0)
    return np.clip(dist.pmf[..., tau + 1:dist.total + 1].sum(axis=-1), 0.0, 1.0)


def cdf_prob(dist: ConditionalLossDist, tau: int) -> np.ndarray:
    """P(L <= tau)."""
    tau = _check_tau(dist, tau)
    return np.clip(dist.pmf[..., :tau + 1].sum(axis=-1), 0.0, 1.0)


def loss_distribution(p: np.ndarray, exposures: np.ndarray) -> ConditionalLossDist:
    """FFT loss pmf for one vector of default probabilities."""
    lattice = LossLattice(exposures)
    return invert_to_pmf(char_function_samples(p, lattice), total=lattice.total)


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------

def binomial_tail_oracle(n: int, p: float, tau: int) -> float:
    return float(binom.sf(tau, n, p))


def binomial_cdf_oracle(n: int, p: float, tau: int) -> float:
    return float(binom.cdf(tau, n, p))


def binomial_pmf_oracle(n: int, p: float) -> ConditionalLossDist:
    return ConditionalLossDist(pmf=binom.pmf(np.arange(n + 1), n, p), source="binomial", total=n)


def convolution_oracle(p: np.ndarray, exposures: np.ndarray) -> ConditionalLossDist:
    """Exact pmf by adding one obligor at a time."""
    p = np.asarray(p, dtype=float)
    exposures = LossLattice(exposures).exposures
    if p.shape != exposures.shape:
        raise ModelDomainError("p and exposures must have the same length")
    total = int(exposures.sum())
    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    filled = 0
    for p_k, c_k in zip(p, exposures):
        nxt = (1.0 - p_k) * pmf
        nxt[c_k:filled + c_k + 1] += p_k * pmf[:filled + 1]
        pmf = nxt
        filled += c_k
    return ConditionalLossDist(pmf=pmf, source="convolution", total=total)


# --------------------------------------------------------------------------
# Portfolio helper
# --------------------------------------------------------------------------

def conditional_tail_probs(
    model: PortfolioModel,
    sample: FactorSample,
    tau: int,
    lattice: Optional[LossLattice] = None,
    max_cells: int = MAX_CELLS,
) -> np.ndarray:
    """FFT approximation of P(L > tau | z, w) for every row of ``sample``."""
    lattice = LossLattice.for_model(model) if lattice is None else lattice
    if not -1 <= tau <= lattice.total:
        raise ModelDomainError(f"tau={tau} outside [-1, {lattice.total}]")
    size = sample.size
    if tau == -1:
        return np.ones(size)
    if tau == lattice.total:
        return np.zeros(size)

    probs = conditional_default_probs(model, sample, grouped=True)
    rows = max(1, max_cells // (lattice.size * lattice.fft_size))
    out = np.empty(size)
    for start in range(0, size, rows):
        stop = min(size, start + rows)
        b = char_function_samples(probs[start:stop], lattice)
        out[start:stop] = tail_prob(invert_to_pmf(b, total=lattice.total), tau)
    return out
