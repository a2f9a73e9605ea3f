"""
Credit-portfolio data model for normal mixture copulas.

Obligor k has the latent variable

    X_k = sum_i rho_ki sqrt(W_i) Z_i + rho_k sqrt(W_{d+1}) sigma_eps eps_k

with Z ~ N(0, Sigma), independent shocks W and eps_k ~ N(0, 1). It defaults when
X_k crosses its threshold chi_k, above or below depending on the model.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..core.errors import ModelDomainError
from ..sampling.distributions import (
    GammaParams,
    MvnParams,
    normal_cdf,
    normal_tail,
    sample_gamma,
    sample_mvn,
)

logger = structlog.get_logger(__name__)


class DefaultDirection(str, Enum):
    ABOVE = "above"
    BELOW = "below"


class ShockKind(str, Enum):
    T_COPULA = "t_copula"
    GAMMA_DIRECT = "gamma_direct"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class ObligorGroups:
    """Obligors with identical loadings, threshold, idiosyncratic loading and exposure."""
    representatives: np.ndarray
    counts: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.representatives.size


@dataclass(frozen=True)
class PortfolioModel:
    loadings: np.ndarray
    thresholds: np.ndarray
    exposures: np.ndarray
    idio_std: float = 1.0
    factor_cov: Optional[np.ndarray] = None
    direction: DefaultDirection = DefaultDirection.ABOVE
    idio_loading: np.ndarray = field(init=False, repr=False)
    factor_law: MvnParams = field(init=False, repr=False)
    groups: ObligorGroups = field(init=False, repr=False)

    def __post_init__(self):
        loadings = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        n, d = loadings.shape
        thresholds = np.broadcast_to(np.asarray(self.thresholds, dtype=float), (n,)).copy()
        exposures = np.broadcast_to(np.asarray(self.exposures), (n,)).copy()

        if not np.all(np.isfinite(loadings)) or not np.all(np.isfinite(thresholds)):
            raise ModelDomainError("loadings and thresholds must be finite")
        row_norms = np.sum(loadings ** 2, axis=1)
        if np.any(row_norms > 1.0 + 1e-12):
            worst = int(np.argmax(row_norms))
            raise ModelDomainError(f"obligor {worst}: squared loadings sum to {row_norms[worst]:.6f} > 1")
        if np.any(exposures < 0) or not np.all(np.equal(np.mod(exposures, 1), 0)):
            raise ModelDomainError("exposures must be non-negative integers")
        if not (np.isfinite(self.idio_std) and self.idio_std > 0):
            raise ModelDomainError("idio_std must be positive")

        idio = np.sqrt(np.clip(1.0 - row_norms, 0.0, None))
        assert np.allclose(idio ** 2 + row_norms, 1.0, atol=1e-12)

        cov = np.eye(d) if self.factor_cov is None else np.asarray(self.factor_cov, dtype=float)
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "exposures", exposures.astype(np.int64))
        object.__setattr__(self, "factor_cov", cov)
        object.__setattr__(self, "direction", DefaultDirection(self.direction))
        object.__setattr__(self, "idio_loading", idio)
        object.__setattr__(self, "factor_law", MvnParams(np.zeros(d), cov))
        object.__setattr__(self, "groups", self._group_obligors())

    @property
    def n(self) -> int:
        return self.loadings.shape[0]

    @property
    def d(self) -> int:
        return self.loadings.shape[1]

    @property
    def total_exposure(self) -> int:
        return int(self.exposures.sum())

    def _group_obligors(self) -> ObligorGroups:
        keys = np.column_stack([self.loadings, self.thresholds, self.idio_loading, self.exposures])
        _, first, labels, counts = np.unique(keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
        return ObligorGroups(representatives=first, counts=counts, labels=np.ravel(labels))


@dataclass(frozen=True)
class ShockSpec:
    """Law of the non-negative mixing variables W_1..W_{d+1}.

    t-copula: W_j = nu_j / Q_j with Q_j ~ Gamma(nu_j/2, 1/2); direct Gamma:
    W_j ~ Gamma(alpha_j, beta_j); degenerate: W = 1. With ``shared`` a single
    gamma-space variable drives every W_j.
    """
    kind: ShockKind
    nu: Tuple[float, ...] = ()
    alpha: Tuple[float, ...] = ()
    beta: Tuple[float, ...] = ()
    shared: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ShockKind(self.kind))
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "beta", tuple(float(v) for v in self.beta))
        if self.kind == ShockKind.T_COPULA:
            if not self.nu or any(not (np.isfinite(v) and v > 0) for v in self.nu):
                raise ModelDomainError("t-copula degrees of freedom must be positive")
            if self.shared and len(self.nu) != 1:
                raise ModelDomainError("a shared t-copula shock takes a single nu")
        elif self.kind == ShockKind.GAMMA_DIRECT:
            if not self.alpha or len(self.alpha) != len(self.beta):
                raise ModelDomainError("direct Gamma shocks need matching alpha and beta")
            for a, b in zip(self.alpha, self.beta):
                GammaParams(a, b)
            if self.shared and len(self.alpha) != 1:
                raise ModelDomainError("a shared Gamma shock takes a single (alpha, beta)")

    @classmethod
    def t_copula(cls, nu: Sequence[float], shared: bool = False) -> "ShockSpec":
        return cls(ShockKind.T_COPULA, nu=tuple(np.atleast_1d(nu)), shared=shared)

    @classmethod
    def gamma_direct(cls, alpha: Sequence[float], beta: Sequence[float], shared: bool = False) -> "ShockSpec":
        return cls(ShockKind.GAMMA_DIRECT, alpha=tuple(np.atleast_1d(alpha)), beta=tuple(np.atleast_1d(beta)), shared=shared)

    @classmethod
    def degenerate(cls) -> "ShockSpec":
        return cls(ShockKind.DEGENERATE)

    @property
    def n_gamma(self) -> int:
        """Number of gamma-space variables that are sampled and tilted."""
        if self.kind == ShockKind.DEGENERATE:
            return 0
        return len(self.nu) if self.kind == ShockKind.T_COPULA else len(self.alpha)

    def base_gamma_laws(self) -> List[GammaParams]:
        if self.kind == ShockKind.T_COPULA:
            return [GammaParams(v / 2.0, 0.5) for v in self.nu]
        if self.kind == ShockKind.GAMMA_DIRECT:
            return [GammaParams(a, b) for a, b in zip(self.alpha, self.beta)]
        return []

    def validate_for(self, model: PortfolioModel):
        if self.kind != ShockKind.DEGENERATE and not self.shared and self.n_gamma != model.d + 1:
            raise ModelDomainError(
                f"independent shocks need d+1={model.d + 1} components, got {self.n_gamma}"
            )

    def to_w(self, q: np.ndarray, d: int) -> np.ndarray:
        """Map gamma-space samples (B, n_gamma) to W (B, d+1)."""
        q = np.atleast_2d(q)
        if self.kind == ShockKind.DEGENERATE:
            return np.ones((q.shape[0], d + 1))
        if self.kind == ShockKind.T_COPULA:
            w = np.asarray(self.nu) / q
        else:
            w = q
        if self.shared:
            w = np.repeat(w[:, :1], d + 1, axis=1)
        return w


def gamma_laws(shock: ShockSpec, theta: Optional[np.ndarray] = None, eta: Optional[np.ndarray] = None) -> List[GammaParams]:
    """Sampling laws Gamma(alpha_j - theta_j, beta_j + eta_j) of the gamma-space variables."""
    base = shock.base_gamma_laws()
    theta = np.zeros(len(base)) if theta is None else np.asarray(theta, dtype=float)
    eta = np.zeros(len(base)) if eta is None else np.asarray(eta, dtype=float)
    laws = []
    for j, law in enumerate(base):
        shape, rate = law.shape - theta[j], law.rate + eta[j]
        if shape <= 0 or rate <= 0:
            raise ModelDomainError(
                f"shock component {j}: tilted law Gamma({shape:.6g}, {rate:.6g}) is outside the domain"
            )
        laws.append(GammaParams(shape, rate) if theta[j] or eta[j] else law)
    return laws


@dataclass
class FactorSample:
    """A batch of factor draws: rows are samples."""
    z: np.ndarray
    w: np.ndarray
    q: np.ndarray

    @property
    def size(self) -> int:
        return self.z.shape[0]


def sample_factors(
    model: PortfolioModel,
    shock: ShockSpec,
    rng: np.random.Generator,
    size: int,
    tilt=None,
) -> FactorSample:
    """Draw (Z, Q, W) under P or under an engine tilt (fields ``mu``, ``theta``, ``eta``).

    Z comes first from the generator, then each gamma-space component in order.
    """
    shock.validate_for(model)
    if tilt is None:
        z_law = model.factor_law
        laws = gamma_laws(shock)
    else:
        mu = np.asarray(tilt.mu, dtype=float)
        z_law = model.factor_law if not np.any(mu) else MvnParams(mu, model.factor_cov)
        laws = gamma_laws(shock, tilt.theta, tilt.eta)

    z = sample_mvn(z_law, rng, size)
    if laws:
        q = np.column_stack([sample_gamma(law, rng, size) for law in laws])
    else:
        q = np.empty((size, 0))
    return FactorSample(z=z, w=shock.to_w(q, model.d), q=q)


def conditional_default_probs(model: PortfolioModel, sample: FactorSample, grouped: bool = False) -> np.ndarray:
    """p_{z,w,k} for every sample and obligor, shape (B, n); (B, groups) when ``grouped``."""
    z = np.atleast_2d(sample.z)
    w = np.atleast_2d(sample.w)
    if np.any(~np.isfinite(z)) or np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ModelDomainError("factor samples must be finite with non-negative shocks")

    index = model.groups.representatives if grouped else slice(None)
    loadings = model.loadings[index]
    thresholds = model.thresholds[index]
    idio = model.idio_loading[index]

    systematic = (z * np.sqrt(w[:, :model.d])) @ loadings.T
    numerator = thresholds[None, :] - systematic
    denominator = idio[None, :] * np.sqrt(w[:, model.d])[:, None] * model.idio_std

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = numerator / denominator
    degenerate = denominator == 0
    if model.direction == DefaultDirection.ABOVE:
        probs = normal_tail(ratio)
        if np.any(degenerate):
            probs = np.where(degenerate, (numerator < 0).astype(float), probs)
    else:
        probs = normal_cdf(ratio)
        if np.any(degenerate):
            probs = np.where(degenerate, (numerator > 0).astype(float), probs)
    return np.clip(probs, 0.0, 1.0)


def simulate_losses(model: PortfolioModel, sample: FactorSample, rng: np.random.Generator) -> np.ndarray:
    """Total loss per sample from full idiosyncratic draws."""
    z = np.atleast_2d(sample.z)
    w = np.atleast_2d(sample.w)
    eps = rng.standard_normal((z.shape[0], model.n))
    systematic = (z * np.sqrt(w[:, :model.d])) @ model.loadings.T
    latent = systematic + model.idio_loading[None, :] * np.sqrt(w[:, model.d])[:, None] * model.idio_std * eps
    if model.direction == DefaultDirection.ABOVE:
        defaults = latent > model.thresholds[None, :]
    else:
        defaults = latent < model.thresholds[None, :]
    return defaults.astype(np.int64) @ model.exposures


def exposure_profile(kind: str, n: int) -> np.ndarray:
    """Integer exposures: ``equal`` ones, ``two_level`` ceil(2i/n)^2, ``five_level`` ceil(5i/n)^2."""
    if n <= 0:
        raise ModelDomainError("n must be positive")
    levels = {"equal": 1, "two_level": 2, "five_level": 5}
    if kind not in levels:
        raise ModelDomainError(f"unknown exposure profile '{kind}'")
    i = np.arange(1, n + 1, dtype=np.int64)
    steps = -(-levels[kind] * i // n)
    return steps ** 2
