"""
Registry of tilting families available to the demo and benchmark commands.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import structlog

from ..core.errors import ModelDomainError
from .families import GammaFamily, MvnFamily, NormalMixtureFamily, StdNormalFamily
from .framework import SufficientFamily

logger = structlog.get_logger(__name__)


@dataclass
class FamilyEntry:
    """A named family factory plus the tilt subsets it supports."""
    name: str
    description: str
    factory: Callable[..., SufficientFamily]
    subsets: List[str]
    events: List[str]

    def create(self, **params) -> SufficientFamily:
        return self.factory(**params)


class FamilyRegistry:
    """Registry for managing available families."""

    def __init__(self):
        self.families: Dict[str, FamilyEntry] = {}

    def register(self, entry: FamilyEntry):
        """Register a family."""
        self.families[entry.name] = entry
        logger.debug(f"Registered family: {entry.name}")

    def get(self, name: str) -> Optional[FamilyEntry]:
        """Get a family entry by name."""
        return self.families.get(name)

    def require(self, name: str) -> FamilyEntry:
        entry = self.get(name)
        if entry is None:
            raise ModelDomainError(f"Family '{name}' not found (known: {', '.join(self.list_families())})")
        return entry

    def list_families(self) -> List[str]:
        """List all registered family names."""
        return list(self.families.keys())

    def create(self, name: str, **params: Any) -> SufficientFamily:
        """Instantiate a family by name."""
        return self.require(name).create(**params)


def _default_registry() -> FamilyRegistry:
    registry = FamilyRegistry()
    registry.register(FamilyEntry(
        name="normal",
        description="Standard normal, tilted in mean and scale",
        factory=StdNormalFamily,
        subsets=["mu", "sigma"],
        events=["tail", "interval_moment", "constant"],
    ))
    registry.register(FamilyEntry(
        name="mvn2",
        description="Bivariate standard normal, tilted in mean, scales and correlation",
        factory=lambda: MvnFamily(2),
        subsets=["mu", "sigma", "rho"],
        events=["sum", "both", "product", "constant"],
    ))
    registry.register(FamilyEntry(
        name="gamma",
        description="Gamma(alpha, beta), tilted in shape and rate",
        factory=lambda alpha=4.0, beta=0.5: GammaFamily(alpha, beta),
        subsets=["theta", "eta"],
        events=["upper", "inverse_upper", "all"],
    ))
    registry.register(FamilyEntry(
        name="mixture",
        description="Normal mean-variance mixture xi*sqrt(W)*Z with Gamma W",
        factory=lambda alpha=4.0, beta=0.5: NormalMixtureFamily(alpha, beta),
        subsets=["mu", "sigma", "theta", "eta"],
        events=["tail"],
    ))
    return registry


# Global family registry
family_registry = _default_registry()
