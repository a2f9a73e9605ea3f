"""
Damped Newton iteration for the first-order tilting equations.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import structlog

logger = structlog.get_logger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]
DomainCheck = Callable[[np.ndarray], bool]

DEFAULT_EPS = 1e-4
DEFAULT_MAX_ITER = 20
MAX_HALVINGS = 40


def squared_norm(g: np.ndarray) -> float:
    """g'g, the convergence measure of the tilt search."""
    g = np.asarray(g, dtype=float)
    return float(g @ g)


@dataclass
class TiltSolution:
    """Tilting parameters found by the solver plus convergence diagnostics."""
    theta: np.ndarray
    eta: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    history: List[float] = field(default_factory=list)
    # some entries are pinned to a domain edge; only the free entries solve g = 0
    boundary: bool = False

    @property
    def delta(self) -> np.ndarray:
        return np.concatenate([self.theta, self.eta])

    def to_dict(self):
        return {
            "theta": self.theta.tolist(),
            "eta": self.eta.tolist(),
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "boundary": self.boundary,
        }


@dataclass
class NewtonStep:
    delta: np.ndarray
    residual: np.ndarray
    norm: float
    accepted: bool
    halvings: int = 0
    gradient_fallback: bool = False


def _always_inside(_: np.ndarray) -> bool:
    return True


def finite_difference_jacobian(
    g: Residual,
    delta: np.ndarray,
    in_domain: DomainCheck = _always_inside,
) -> np.ndarray:
    """Central differences with h_i = max(1e-4, 1e-3 |delta_i|).

    Falls back to a one-sided quotient when a perturbed point leaves the domain.
    """
    delta = np.asarray(delta, dtype=float)
    base = None
    columns = []
    for i in range(delta.size):
        h = max(1e-4, 1e-3 * abs(delta[i]))
        up = delta.copy()
        up[i] += h
        down = delta.copy()
        down[i] -= h
        up_ok, down_ok = in_domain(up), in_domain(down)
        if up_ok and down_ok:
            columns.append((g(up) - g(down)) / (2.0 * h))
            continue
        if base is None:
            base = np.asarray(g(delta), dtype=float)
        if up_ok:
            columns.append((g(up) - base) / h)
        elif down_ok:
            columns.append((base - g(down)) / h)
        else:
            columns.append(np.zeros_like(base))
    return np.column_stack(columns)


def _newton_direction(jacobian: np.ndarray, g_value: np.ndarray):
    """Newton direction, or the gradient of g'g when the Jacobian is singular."""
    if np.all(np.isfinite(jacobian)) and np.linalg.cond(jacobian) < 1e12:
        try:
            return np.linalg.solve(jacobian, -g_value), False
        except np.linalg.LinAlgError:
            pass
    return -jacobian.T @ g_value, True


def damped_newton_step(
    g: Residual,
    delta: np.ndarray,
    g_value: Optional[np.ndarray] = None,
    in_domain: DomainCheck = _always_inside,
    max_halvings: int = MAX_HALVINGS,
) -> NewtonStep:
    """One Newton update with step halving.

    The step is halved until the iterate stays inside the domain and g'g
    strictly decreases. When no Newton step length works the gradient
    direction of g'g is tried before the step is rejected.
    """
    delta = np.asarray(delta, dtype=float)
    g_value = np.asarray(g(delta) if g_value is None else g_value, dtype=float)
    current = squared_norm(g_value)
    jacobian = finite_difference_jacobian(g, delta, in_domain)
    direction, fallback = _newton_direction(jacobian, g_value)

    directions = [(direction, fallback)]
    if not fallback:
        directions.append((-jacobian.T @ g_value, True))

    for step, is_gradient in directions:
        if not np.all(np.isfinite(step)) or not np.any(step):
            continue
        t = 1.0
        for halvings in range(max_halvings + 1):
            candidate = delta + t * step
            if in_domain(candidate):
                value = np.asarray(g(candidate), dtype=float)
                norm = squared_norm(value)
                if np.isfinite(norm) and norm < current:
                    return NewtonStep(candidate, value, norm, True, halvings, is_gradient)
            t *= 0.5

    return NewtonStep(delta, g_value, current, False, max_halvings, fallback)


def newton_solve(
    g: Residual,
    delta0: np.ndarray,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    in_domain: DomainCheck = _always_inside,
    n_theta: Optional[int] = None,
) -> TiltSolution:
    """Solve g(delta) = 0 by damped Newton from ``delta0``.

    Stops when g'g < eps or after ``max_iter`` updates; a stalled or exhausted
    search is returned with ``converged=False``.
    """
    delta = np.atleast_1d(np.asarray(delta0, dtype=float)).copy()
    if not in_domain(delta):
        raise ValueError("initial tilting parameters lie outside the domain")
    n_theta = delta.size if n_theta is None else n_theta

    g_value = np.asarray(g(delta), dtype=float)
    norm = squared_norm(g_value)
    history = [norm]
    iterations = 0

    while norm >= eps and iterations < max_iter:
        step = damped_newton_step(g, delta, g_value, in_domain)
        if not step.accepted:
            logger.warning("Newton step rejected", iteration=iterations, residual=norm)
            break
        iterations += 1
        delta, g_value, norm = step.delta, step.residual, step.norm
        history.append(norm)
        logger.debug(
            "Newton iteration",
            iteration=iterations,
            residual=norm,
            halvings=step.halvings,
            gradient_fallback=step.gradient_fallback,
        )

    return TiltSolution(
        theta=delta[:n_theta].copy(),
        eta=delta[n_theta:].copy(),
        iterations=iterations,
        final_residual=norm,
        converged=norm < eps,
        history=history,
    )
