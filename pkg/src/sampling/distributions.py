"""
Seedable random streams, parameter containers, samplers, log densities and
the special functions used across the engine.

Streams are counter-based (Philox keyed by ``(seed, stream_id)``), so any chunk
of work can be regenerated independently of how the work was split between
workers.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, special

from ..core.errors import ModelDomainError

ArrayLike = Union[float, np.ndarray]

_LOG_2PI = float(np.log(2.0 * np.pi))
_UINT64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """Substream selector for a reproducible random sequence."""
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _UINT64_MASK or not 0 <= self.stream_id <= _UINT64_MASK:
            raise ModelDomainError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RandomStream":
        """The stream ``offset`` positions after this one."""
        return RandomStream(self.seed, (self.stream_id + offset) & _UINT64_MASK)


@dataclass(frozen=True)
class MvnParams:
    """Mean and covariance of a multivariate normal law with a cached Cholesky factor."""
    mean: np.ndarray
    covariance: np.ndarray
    chol_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ModelDomainError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
            raise ModelDomainError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ModelDomainError("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol_factor", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def standard(cls, dim: int) -> "MvnParams":
        return cls(np.zeros(dim), np.eye(dim))


@dataclass(frozen=True)
class GammaParams:
    """Gamma law in shape/rate form, density proportional to x^(shape-1) exp(-rate x)."""
    shape: float
    rate: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ModelDomainError(f"gamma shape must be positive, got {self.shape}")
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise ModelDomainError(f"gamma rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate ** 2


# --------------------------------------------------------------------------
# Samplers
# --------------------------------------------------------------------------

def sample_std_normal(rng: np.random.Generator, size=None) -> ArrayLike:
    """Standard normal variates."""
    return rng.standard_normal(size)


def sample_mvn(params: MvnParams, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Multivariate normal variates, ``mean + L @ N(0, I)``; shape ``(d,)`` or ``(size, d)``."""
    if size is None:
        return params.mean + params.chol_factor @ rng.standard_normal(params.dim)
    normals = rng.standard_normal((size, params.dim))
    return params.mean + normals @ params.chol_factor.T


def sample_gamma(params: GammaParams, rng: np.random.Generator, size=None) -> ArrayLike:
    """Gamma variates in rate parameterization.

    numpy's generator uses the Marsaglia-Tsang squeeze method and boosts
    shapes below one, so tilted shapes in (0, 1) are handled.
    """
    return rng.gamma(params.shape, 1.0 / params.rate, size)


# --------------------------------------------------------------------------
# Log densities
# --------------------------------------------------------------------------

def log_pdf_normal(x: ArrayLike, mean: ArrayLike = 0.0, std: ArrayLike = 1.0) -> ArrayLike:
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise ModelDomainError("normal standard deviation must be positive")
    z = (np.asarray(x, dtype=float) - mean) / std
    return -0.5 * z * z - np.log(std) - 0.5 * _LOG_2PI


def log_pdf_mvn(x: np.ndarray, params: MvnParams) -> ArrayLike:
    """Log density of ``N(mean, covariance)`` at a point or at each row of ``x``."""
    x = np.asarray(x, dtype=float)
    centered = np.atleast_2d(x - params.mean)
    solved = linalg.solve_triangular(params.chol_factor, centered.T, lower=True)
    quad = np.sum(solved * solved, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(params.chol_factor)))
    values = -0.5 * (quad + log_det + params.dim * _LOG_2PI)
    return values[0] if x.ndim == 1 else values


def log_pdf_gamma(x: ArrayLike, params: GammaParams) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ModelDomainError("gamma density is only defined for x > 0")
    return (params.shape * np.log(params.rate) - special.gammaln(params.shape)
            + (params.shape - 1.0) * np.log(x) - params.rate * x)


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------

def normal_cdf(x: ArrayLike) -> ArrayLike:
    return special.ndtr(x)


def normal_tail(x: ArrayLike) -> ArrayLike:
    """1 - Phi(x), evaluated without cancellation."""
    return special.ndtr(-np.asarray(x, dtype=float))


def normal_hazard(x: ArrayLike) -> ArrayLike:
    """Inverse Mills ratio phi(x) / (1 - Phi(x)), stable far in the tail."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - 0.5 * _LOG_2PI - special.log_ndtr(-x))


def _require_positive(name: str, value: ArrayLike):
    if np.any(np.asarray(value) <= 0):
        raise ModelDomainError(f"{name} requires a positive argument")


def digamma(x: ArrayLike) -> ArrayLike:
    _require_positive("digamma", x)
    return special.digamma(x)


def log_gamma_fn(x: ArrayLike) -> ArrayLike:
    _require_positive("log_gamma_fn", x)
    return special.gammaln(x)


def regularized_upper_gamma(shape: float, rate: float, a: ArrayLike) -> ArrayLike:
    """P(X > a) for X ~ Gamma(shape, rate)."""
    _require_positive("regularized_upper_gamma", shape)
    _require_positive("regularized_upper_gamma", rate)
    _require_positive("regularized_upper_gamma", a)
    return special.gammaincc(shape, rate * np.asarray(a, dtype=float))


def regularized_lower_gamma(shape: float, rate: float, a: ArrayLike) -> ArrayLike:
    """P(X <= a) for X ~ Gamma(shape, rate)."""
    _require_positive("regularized_lower_gamma", shape)
    _require_positive("regularized_lower_gamma", rate)
    _require_positive("regularized_lower_gamma", a)
    return special.gammainc(shape, rate * np.asarray(a, dtype=float))
