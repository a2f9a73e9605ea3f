"""
Estimator summaries shared by the families catalog and the portfolio engine.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np


@dataclass
class EstimatorStats:
    """Mean and per-sample variance of an estimator's summands."""
    mean: float
    variance: float
    samples: int

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.variance / self.samples)) if self.samples > 0 else float("nan")

    @property
    def vr_factor(self) -> float:
        """p(1-p) over the per-sample variance, with p taken from this estimate."""
        return vr_factor(self.mean, self.variance)

    def to_dict(self) -> Dict[str, float]:
        return {
            "estimate": self.mean,
            "variance": self.variance,
            "std_error": self.std_error,
            "samples": self.samples,
        }


def summarize(values: np.ndarray) -> EstimatorStats:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        return EstimatorStats(float("nan"), float("nan"), 0)
    variance = float(values.var(ddof=1)) if n > 1 else 0.0
    return EstimatorStats(float(values.mean()), variance, n)


def vr_factor(p_hat: float, variance: float) -> float:
    if not 0.0 < p_hat < 1.0:
        return float("nan")
    if variance <= 0.0:
        return float("inf")
    return p_hat * (1.0 - p_hat) / variance


def combined_standard_error(*errors: float) -> float:
    return float(np.sqrt(sum(e * e for e in errors)))


def within_standard_errors(value: float, reference: float, std_error: float, k: float = 3.0) -> bool:
    return abs(value - reference) <= k * std_error
