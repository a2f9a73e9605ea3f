"""
Named portfolio presets for the benchmark experiments.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri
import structlog

from ..core.errors import ModelDomainError
from ..sampling.distributions import normal_tail
from .model import DefaultDirection, PortfolioModel, ShockSpec, exposure_profile

logger = structlog.get_logger(__name__)

PRESET_NAMES = ("one_factor_t", "three_factor_base", "three_factor_gig", "cdx_ig_8factor", "fft_check")


@dataclass(frozen=True)
class ExperimentConstants:
    """Defaults an experiment inherits from its preset."""
    b: float
    b_values: Tuple[float, ...]
    B1: int = 5_000
    B2: int = 10_000
    tilt: Tuple[str, ...] = ("mu", "eta")
    reference: Dict[float, float] = field(default_factory=dict)

    def tau(self, n: int, b: Optional[float] = None) -> int:
        """Loss level tau = round(n b)."""
        return int(round(n * (self.b if b is None else b)))


@dataclass(frozen=True)
class Preset:
    name: str
    model: PortfolioModel
    shock: ShockSpec
    constants: ExperimentConstants
    overrides: Dict[str, Any] = field(default_factory=dict)


def factor_covariance(sigmas: Sequence[float], rho_hat: float) -> np.ndarray:
    """u_ii = sigma_i^2 and u_ij = rho_hat sigma_i sigma_j."""
    s = np.asarray(sigmas, dtype=float)
    cov = rho_hat * np.outer(s, s)
    np.fill_diagonal(cov, s ** 2)
    return cov


def _one_factor_t(n: int = 250, nu: float = 4.0, loading: float = 0.25, b: float = 0.25,
                  exposures: str = "equal", sigma_eps: float = 3.0) -> Preset:
    model = PortfolioModel(
        loadings=np.full((n, 1), loading),
        thresholds=np.full(n, 0.5 * np.sqrt(n)),
        exposures=exposure_profile(exposures, n),
        idio_std=sigma_eps,
    )
    shock = ShockSpec.t_copula([nu], shared=True)
    reference = {4.0: 8.13e-3, 8.0: 2.42e-4, 12.0: 1.07e-5, 16.0: 6.16e-7, 20.0: 4.38e-8}
    constants = ExperimentConstants(
        b=b, b_values=(b,), tilt=("mu", "eta"),
        reference={0.25: reference[nu]} if nu in reference else {},
    )
    return Preset("one_factor_t", model, shock, constants)


def _three_factor(
    name: str,
    n: int = 250,
    nu: Sequence[float] = (8.0, 6.0, 4.0, 4.0),
    loading: float = 0.1,
    rho_hat: float = 0.5,
    sigmas: Sequence[float] = (1.0, 0.8, 0.5),
    b: Optional[float] = None,
    exposures: str = "equal",
    sigma_eps: float = 3.0,
) -> Preset:
    model = PortfolioModel(
        loadings=np.full((n, 3), loading),
        thresholds=np.full(n, 0.5 * np.sqrt(n)),
        exposures=exposure_profile(exposures, n),
        idio_std=sigma_eps,
        factor_cov=factor_covariance(sigmas, rho_hat),
    )
    if name == "three_factor_gig":
        shock = ShockSpec.gamma_direct([v / 2.0 for v in nu], [0.5] * len(nu))
        b_values = (0.28, 0.32, 0.36)
        tilt = ("mu", "theta")
        reference = {0.28: 1.98e-3, 0.32: 1.75e-4, 0.36: 7.55e-6}
    else:
        shock = ShockSpec.t_copula(nu)
        base_b = {"equal": 0.3, "two_level": 0.7, "five_level": 2.0}[exposures]
        b_values = {
            "equal": (0.3, 0.4, 0.5),
            "two_level": (0.7, 1.0, 1.2),
            "five_level": (2.0, 4.0, 6.0),
        }[exposures]
        tilt = ("mu", "eta")
        reference = {
            "equal": {0.3: 3.08e-3, 0.4: 2.39e-4, 0.5: 2.13e-6},
            "two_level": {0.7: 4.79e-3, 1.0: 2.91e-4, 1.2: 1.20e-5},
            "five_level": {2.0: 2.38e-2, 4.0: 8.59e-4, 6.0: 4.15e-7},
        }[exposures]
        b = base_b if b is None else b
    if b is None:
        b = b_values[1]
    constants = ExperimentConstants(b=b, b_values=b_values, tilt=tilt, reference=reference)
    return Preset(name, model, shock, constants)


def _cdx_ig_8factor(n: int = 125, b: float = 0.2, nu: float = 4.0, sectors: int = 7,
                    rho_global: float = 0.17, rho_sector: float = 0.23) -> Preset:
    if not 0 <= rho_global <= rho_sector < 1:
        raise ModelDomainError("need 0 <= rho_global <= rho_sector < 1")
    loadings = np.zeros((n, 1 + sectors))
    loadings[:, 0] = np.sqrt(rho_global)
    # Sector membership is synthetic: obligors are dealt round-robin.
    loadings[np.arange(n), 1 + np.arange(n) % sectors] = np.sqrt(rho_sector - rho_global)
    model = PortfolioModel(
        loadings=loadings,
        thresholds=np.full(n, -0.55 * np.sqrt(n)),
        exposures=np.ones(n, dtype=np.int64),
        idio_std=1.0,
        direction=DefaultDirection.BELOW,
    )
    shock = ShockSpec.t_copula([nu], shared=True)
    constants = ExperimentConstants(
        b=b, b_values=(0.01, 0.05, 0.2), tilt=("mu", "eta"),
        reference={0.01: 2.19e-2, 0.05: 6.43e-3, 0.2: 4.18e-4},
    )
    return Preset("cdx_ig_8factor", model, shock, constants)


def _fft_check(n: int = 250, exposures: str = "equal", p: float = 0.1) -> Preset:
    """Independent obligors with default probability ``p``: zero loadings, degenerate shock."""
    if not 0 < p < 1:
        raise ModelDomainError("p must lie in (0, 1)")
    model = PortfolioModel(
        loadings=np.zeros((n, 1)),
        thresholds=np.full(n, float(ndtri(1.0 - p))),
        exposures=exposure_profile(exposures, n),
    )
    assert abs(float(normal_tail(model.thresholds[0])) - p) < 1e-12
    tau = {"equal": (20, 10, 5), "five_level": (200, 100, 50)}.get(exposures, (20,))
    constants = ExperimentConstants(b=tau[0] / n, b_values=tuple(t / n for t in tau), tilt=("mu",))
    return Preset("fft_check", model, ShockSpec.degenerate(), constants)


_BUILDERS = {
    "one_factor_t": _one_factor_t,
    "three_factor_base": lambda **kw: _three_factor("three_factor_base", **kw),
    "three_factor_gig": lambda **kw: _three_factor("three_factor_gig", **kw),
    "cdx_ig_8factor": _cdx_ig_8factor,
    "fft_check": _fft_check,
}

# Overrides that leave the reference values of a preset meaningful.
_REFERENCE_NEUTRAL = {
    "one_factor_t": {"b", "nu"},
    "three_factor_base": {"b", "exposures"},
    "three_factor_gig": {"b"},
    "cdx_ig_8factor": {"b"},
    "fft_check": set(),
}


def preset(name: str, **overrides: Any) -> Preset:
    """Build a named preset, optionally overriding its constants.

    Accepted overrides depend on the preset: n, nu, loading, rho_hat, sigmas,
    b, exposures, sigma_eps (and p for ``fft_check``).
    """
    if name not in _BUILDERS:
        raise ModelDomainError(f"unknown preset '{name}' (known: {', '.join(PRESET_NAMES)})")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "nu" in overrides and name in ("three_factor_base", "three_factor_gig"):
        overrides["nu"] = tuple(float(v) for v in np.atleast_1d(overrides["nu"]))
    elif "nu" in overrides:
        overrides["nu"] = float(np.ravel(overrides["nu"])[0])
    try:
        built = _BUILDERS[name](**overrides)
    except TypeError as exc:
        raise ModelDomainError(f"preset '{name}': {exc}") from exc
    if set(overrides) - _REFERENCE_NEUTRAL[name]:
        built = replace(built, constants=replace(built.constants, reference={}))
    logger.debug("Preset built", preset=name, n=built.model.n, d=built.model.d, overrides=overrides)
    return replace(built, overrides=overrides)
