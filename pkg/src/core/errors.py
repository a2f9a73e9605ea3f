"""
Exception hierarchy shared by every layer of the engine.
"""

from typing import Optional


class TiltRiskError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(TiltRiskError):
    """A run configuration failed to parse or validate."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = f"line {line}: " if line is not None else ""
        super().__init__(f"{location}{message}")


class ModelDomainError(TiltRiskError, ValueError):
    """Parameters lie outside the domain of a law, family or model."""


class NumericalFailure(TiltRiskError):
    """A numerical routine produced values that cannot be trusted."""


class DegeneratePilotError(NumericalFailure):
    """No pilot sample carries a positive payoff."""

    def __init__(self, pilot_size: int, detail: str = ""):
        self.pilot_size = pilot_size
        hint = "increase the pilot size B1 or use a less extreme loss level tau"
        message = f"no pilot sample out of {pilot_size} has a positive payoff; {hint}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ConvergenceError(NumericalFailure):
    """An iterative solver did not reach the requested precision."""

    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} after {iterations} iterations (residual={residual:.3e})")
