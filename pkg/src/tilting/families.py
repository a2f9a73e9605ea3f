"""
Closed-form sufficient tilting catalogs: standard normal, multivariate normal,
Gamma, their products, and the one-factor normal mixture.

Each family exposes its sufficient statistics, cumulant function and analytic
gradient. The solvers in this module find optimal tilts for specific events,
either with deterministic truncated moments (half-line events) or from a
pilot sample drawn under the base law.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
import structlog

from ..core.errors import ConvergenceError, ModelDomainError
from ..sampling.distributions import (
    GammaParams,
    MvnParams,
    RandomStream,
    digamma,
    log_gamma_fn,
    normal_hazard,
    sample_gamma,
    sample_mvn,
    sample_std_normal,
)
from ..utils.stats import EstimatorStats, summarize
from .framework import (
    DOMAIN_MARGIN,
    EDGE_OFFSET,
    Payoff,
    Pilot,
    Samples,
    SufficientFamily,
    crude_summands,
    foc_residual,
    solve_restricted,
    tilted_summands,
)
from .newton import DEFAULT_EPS, DEFAULT_MAX_ITER, TiltSolution

logger = structlog.get_logger(__name__)

# Deterministic residuals can be driven far below the Monte Carlo precision.
CLOSED_FORM_EPS = 1e-20


def _column(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, 1)


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------

class StdNormalFamily(SufficientFamily):
    """N(0, 1) tilted along (x, x^2); Q is N(theta/(1-2 eta), 1/(1-2 eta)).

    The domain keeps |eta| < 1/2 so that both the tilted law and the
    conjugate law N(-theta/(1+2 eta), 1/(1+2 eta)) are proper.
    """

    name = "normal"

    def __init__(self):
        super().__init__(dim_theta=1, dim_eta=1)

    def h1(self, x):
        return _column(x)

    def h2(self, x):
        return _column(np.asarray(x, dtype=float) ** 2)

    def psi(self, theta, eta):
        t, e = float(np.ravel(theta)[0]), float(np.ravel(eta)[0])
        return -0.5 * np.log(1.0 - 2.0 * e) + t * t / (2.0 * (1.0 - 2.0 * e))

    def grad_psi(self, theta, eta):
        mu, var = self.to_mean_var(theta, eta)
        return np.array([mu, var + mu * mu])

    def in_domain(self, theta, eta, margin=DOMAIN_MARGIN):
        e = float(np.ravel(eta)[0])
        return bool(np.isfinite(np.ravel(theta)[0]) and -0.5 + margin < e < 0.5 - margin)

    def sample_base(self, rng, size):
        return sample_std_normal(rng, size)

    def sample_tilted(self, theta, eta, rng, size):
        mu, var = self.to_mean_var(theta, eta)
        return mu + np.sqrt(var) * sample_std_normal(rng, size)

    @property
    def subsets(self):
        return {"mu": [0], "sigma": [1]}

    @property
    def lower_edges(self):
        # conjugate variance 1/(1 + 2 eta) diverges at eta = -1/2
        return {1: -0.5 + EDGE_OFFSET}

    @staticmethod
    def to_mean_var(theta, eta) -> Tuple[float, float]:
        t, e = float(np.ravel(theta)[0]), float(np.ravel(eta)[0])
        var = 1.0 / (1.0 - 2.0 * e)
        return t * var, var

    @staticmethod
    def from_mean_var(mu: float, var: float) -> Tuple[float, float]:
        if var <= 0:
            raise ModelDomainError("variance must be positive")
        return mu / var, 0.5 * (1.0 - 1.0 / var)

    @staticmethod
    def conjugate_law(theta, eta) -> Tuple[float, float]:
        """Mean and variance of the conjugate normal law."""
        t, e = float(np.ravel(theta)[0]), float(np.ravel(eta)[0])
        if 1.0 + 2.0 * e <= 0:
            raise ModelDomainError("conjugate normal law requires eta > -1/2")
        var = 1.0 / (1.0 + 2.0 * e)
        return -t * var, var


class MvnFamily(SufficientFamily):
    """N(0, I_d) tilted by theta'x + x'M x.

    M has eta_i on the diagonal and a common eta_{d+1} off the diagonal, so
    h2 = (x_1^2, ..., x_d^2, sum_{j != k} x_j x_k) and the tilted law is
    N((I - 2M)^-1 theta, (I - 2M)^-1).
    """

    name = "mvn"

    def __init__(self, d: int = 2):
        if d < 2:
            raise ModelDomainError("MvnFamily needs at least two dimensions")
        super().__init__(dim_theta=d, dim_eta=d + 1)
        self.d = d

    def h1(self, x):
        return np.atleast_2d(np.asarray(x, dtype=float))

    def h2(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        squares = x * x
        total = x.sum(axis=1)
        cross = total * total - squares.sum(axis=1)
        return np.hstack([squares, cross[:, None]])

    def m_matrix(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        m = np.full((self.d, self.d), eta[self.d])
        np.fill_diagonal(m, eta[:self.d])
        return m

    def eta_stencils(self) -> List[np.ndarray]:
        """Derivatives of M with respect to each eta_i."""
        stencils = []
        for i in range(self.d):
            b = np.zeros((self.d, self.d))
            b[i, i] = 1.0
            stencils.append(b)
        off = np.ones((self.d, self.d)) - np.eye(self.d)
        stencils.append(off)
        return stencils

    def to_mean_cov(self, theta, eta) -> Tuple[np.ndarray, np.ndarray]:
        precision = np.eye(self.d) - 2.0 * self.m_matrix(eta)
        cov = np.linalg.inv(precision)
        cov = 0.5 * (cov + cov.T)
        return cov @ np.asarray(theta, dtype=float), cov

    def from_mean_cov(self, mean, cov) -> Tuple[np.ndarray, np.ndarray]:
        """Inverse map; ``cov`` must have the exchangeable off-diagonal precision pattern."""
        precision = np.linalg.inv(np.asarray(cov, dtype=float))
        m = 0.5 * (np.eye(self.d) - precision)
        off = m[~np.eye(self.d, dtype=bool)]
        if not np.allclose(off, off[0], rtol=1e-9, atol=1e-12):
            raise ModelDomainError("covariance is not representable by a common off-diagonal tilt")
        eta = np.append(np.diag(m), off[0])
        return precision @ np.asarray(mean, dtype=float), eta

    def k_function(self, theta, eta) -> np.ndarray:
        """tr(Sigma B_i) + mu' B_i mu for every stencil B_i."""
        mu, cov = self.to_mean_cov(theta, eta)
        return np.array([np.trace(cov @ b) + mu @ b @ mu for b in self.eta_stencils()])

    def psi(self, theta, eta):
        precision = np.eye(self.d) - 2.0 * self.m_matrix(eta)
        _, log_det = np.linalg.slogdet(precision)
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * log_det + 0.5 * theta @ np.linalg.solve(precision, theta))

    def grad_psi(self, theta, eta):
        mu, _ = self.to_mean_cov(theta, eta)
        return np.concatenate([mu, self.k_function(theta, eta)])

    def in_domain(self, theta, eta, margin=DOMAIN_MARGIN):
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(eta))):
            return False
        m = self.m_matrix(eta)
        shift = margin * np.eye(self.d)
        for candidate in (np.eye(self.d) - 2.0 * m - shift, np.eye(self.d) + 2.0 * m - shift):
            try:
                np.linalg.cholesky(candidate)
            except np.linalg.LinAlgError:
                return False
        return True

    def sample_base(self, rng, size):
        return sample_mvn(MvnParams.standard(self.d), rng, size)

    def sample_tilted(self, theta, eta, rng, size):
        mu, cov = self.to_mean_cov(theta, eta)
        return sample_mvn(MvnParams(mu, cov), rng, size)

    @property
    def subsets(self):
        d = self.d
        return {"mu": list(range(d)), "sigma": list(range(d, 2 * d)), "rho": [2 * d]}


class MvnMeanFamily(SufficientFamily):
    """N(0, Sigma) tilted in the mean only: theta'z, so Q is N(Sigma theta, Sigma)."""

    name = "mvn_mean"

    def __init__(self, covariance: np.ndarray):
        self.params = MvnParams(np.zeros(np.atleast_2d(covariance).shape[0]), covariance)
        super().__init__(dim_theta=self.params.dim, dim_eta=0)

    def h1(self, x):
        return np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.dim_theta)

    def h2(self, x):
        return np.empty((self.h1(x).shape[0], 0))

    def psi(self, theta, eta):
        theta = np.asarray(theta, dtype=float)
        return float(0.5 * theta @ self.params.covariance @ theta)

    def grad_psi(self, theta, eta):
        return self.params.covariance @ np.asarray(theta, dtype=float)

    def in_domain(self, theta, eta, margin=DOMAIN_MARGIN):
        return bool(np.all(np.isfinite(theta)))

    def sample_base(self, rng, size):
        return sample_mvn(self.params, rng, size)

    def sample_tilted(self, theta, eta, rng, size):
        return sample_mvn(MvnParams(self.grad_psi(theta, eta), self.params.covariance), rng, size)

    @property
    def subsets(self):
        return {"mu": list(range(self.dim_theta))}


class GammaFamily(SufficientFamily):
    """Gamma(alpha, beta) tilted along (ln x, x); Q is Gamma(alpha + theta, beta - eta)."""

    name = "gamma"

    def __init__(self, alpha: float, beta: float):
        self.base = GammaParams(alpha, beta)
        super().__init__(dim_theta=1, dim_eta=1)

    @property
    def alpha(self) -> float:
        return self.base.shape

    @property
    def beta(self) -> float:
        return self.base.rate

    def h1(self, x):
        return _column(np.log(x))

    def h2(self, x):
        return _column(x)

    def psi(self, theta, eta):
        t, e = float(np.ravel(theta)[0]), float(np.ravel(eta)[0])
        a, b = self.alpha, self.beta
        return float(log_gamma_fn(a + t) - log_gamma_fn(a) + a * np.log(b) - (a + t) * np.log(b - e))

    def grad_psi(self, theta, eta):
        tilted = self.tilted_law(theta, eta)
        return np.array([digamma(tilted.shape) - np.log(tilted.rate), tilted.mean])

    def in_domain(self, theta, eta, margin=DOMAIN_MARGIN):
        t, e = float(np.ravel(theta)[0]), float(np.ravel(eta)[0])
        return bool(np.isfinite(t) and np.isfinite(e) and self.alpha + t > margin and self.beta - e > margin)

    def tilted_law(self, theta, eta) -> GammaParams:
        return GammaParams(self.alpha + float(np.ravel(theta)[0]), self.beta - float(np.ravel(eta)[0]))

    def conjugate_law(self, theta, eta) -> GammaParams:
        return GammaParams(self.alpha - float(np.ravel(theta)[0]), self.beta + float(np.ravel(eta)[0]))

    def sample_base(self, rng, size):
        return sample_gamma(self.base, rng, size)

    def sample_tilted(self, theta, eta, rng, size):
        return sample_gamma(self.tilted_law(theta, eta), rng, size)

    @property
    def subsets(self):
        return {"theta": [0], "eta": [1]}


class ProductFamily(SufficientFamily):
    """Independent components tilted jointly; samples are tuples of component samples.

    delta is ordered as (all thetas, all etas); subsets with the same name in
    several components are merged.
    """

    name = "product"

    def __init__(self, components: Sequence[SufficientFamily], name: Optional[str] = None):
        self.components = list(components)
        super().__init__(
            dim_theta=sum(c.dim_theta for c in self.components),
            dim_eta=sum(c.dim_eta for c in self.components),
        )
        if name:
            self.name = name
        self._theta_offsets = np.cumsum([0] + [c.dim_theta for c in self.components])
        self._eta_offsets = np.cumsum([0] + [c.dim_eta for c in self.components])

    def component_delta(self, delta: np.ndarray, index: int) -> np.ndarray:
        theta, eta = self.split(delta)
        t0, t1 = self._theta_offsets[index], self._theta_offsets[index + 1]
        e0, e1 = self._eta_offsets[index], self._eta_offsets[index + 1]
        return np.concatenate([theta[t0:t1], eta[e0:e1]])

    def _components_of(self, theta, eta):
        delta = np.concatenate([np.atleast_1d(theta), np.atleast_1d(eta)])
        for i, component in enumerate(self.components):
            yield component, component.split(self.component_delta(delta, i))

    def h1(self, x):
        return np.hstack([c.h1(xi) for c, xi in zip(self.components, x)])

    def h2(self, x):
        return np.hstack([c.h2(xi) for c, xi in zip(self.components, x)])

    def psi(self, theta, eta):
        return float(sum(c.psi(t, e) for c, (t, e) in self._components_of(theta, eta)))

    def grad_psi(self, theta, eta):
        grads_theta, grads_eta = [], []
        for component, (t, e) in self._components_of(theta, eta):
            grad = component.grad_psi(t, e)
            grads_theta.append(grad[:component.dim_theta])
            grads_eta.append(grad[component.dim_theta:])
        return np.concatenate(grads_theta + grads_eta)

    def in_domain(self, theta, eta, margin=DOMAIN_MARGIN):
        return all(c.in_domain(t, e, margin) for c, (t, e) in self._components_of(theta, eta))

    def sample_base(self, rng, size):
        return tuple(c.sample_base(rng, size) for c in self.components)

    def sample_tilted(self, theta, eta, rng, size):
        return tuple(c.sample_tilted(t, e, rng, size) for c, (t, e) in self._components_of(theta, eta))

    def _product_index(self, i: int, j: int) -> int:
        """Position in the product delta of entry j of component i."""
        component = self.components[i]
        if j < component.dim_theta:
            return int(self._theta_offsets[i] + j)
        return int(self.dim_theta + self._eta_offsets[i] + j - component.dim_theta)

    @property
    def subsets(self):
        groups: Dict[str, List[int]] = {}
        for i, component in enumerate(self.components):
            for name, indices in component.subsets.items():
                groups.setdefault(name, []).extend(self._product_index(i, j) for j in indices)
        return groups

    @property
    def lower_edges(self):
        return {
            self._product_index(i, j): value
            for i, component in enumerate(self.components)
            for j, value in component.lower_edges.items()
        }


class NormalMixtureFamily(ProductFamily):
    """Independent (Z, W) with Z ~ N(0, 1) and W ~ Gamma(alpha, beta)."""

    def __init__(self, alpha: float, beta: float):
        super().__init__([StdNormalFamily(), GammaFamily(alpha, beta)], name="mixture")


# --------------------------------------------------------------------------
# Events
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    """A named non-negative payoff on a family's samples."""
    name: str
    threshold: float
    payoff: Payoff

    def __call__(self, x: Samples) -> np.ndarray:
        return np.asarray(self.payoff(x), dtype=float)


def normal_event(kind: str, a: float) -> Event:
    if kind == "tail":
        return Event("tail", a, lambda x: (np.asarray(x) > a).astype(float))
    if kind == "interval_moment":
        return Event("interval_moment", a, lambda x: np.where((x > 0) & (x < a), x, 0.0))
    if kind == "constant":
        return Event("constant", a, lambda x: np.ones(np.shape(x)[0]))
    raise ModelDomainError(f"unknown normal event '{kind}'")


def mvn_event(kind: str, a: float) -> Event:
    """Events on R^d; ``product`` uses the first two coordinates."""
    if kind == "sum":
        return Event("sum", a, lambda x: (np.atleast_2d(x).sum(axis=1) > a).astype(float))
    if kind == "both":
        return Event("both", a, lambda x: np.all(np.atleast_2d(x) > a, axis=1).astype(float))
    if kind == "product":
        def payoff(x):
            x = np.atleast_2d(x)
            return ((x[:, 0] * x[:, 1] > a) & (x[:, 0] > 0) & (x[:, 1] > 0)).astype(float)
        return Event("product", a, payoff)
    if kind == "constant":
        return Event("constant", a, lambda x: np.ones(np.atleast_2d(x).shape[0]))
    raise ModelDomainError(f"unknown mvn event '{kind}'")


@dataclass(frozen=True)
class HalfLineEvent:
    """{X > a}, {1/X > a} or the whole half-line for a positive variable."""
    kind: str
    threshold: float = 0.0

    def __post_init__(self):
        if self.kind not in ("upper", "inverse_upper", "all"):
            raise ModelDomainError(f"unknown gamma event '{self.kind}'")
        if self.kind != "all" and self.threshold <= 0:
            raise ModelDomainError("half-line events need a positive threshold")

    @property
    def interval(self) -> Tuple[float, float]:
        if self.kind == "upper":
            return self.threshold, np.inf
        if self.kind == "inverse_upper":
            return 0.0, 1.0 / self.threshold
        return 0.0, np.inf

    def __call__(self, x):
        lo, hi = self.interval
        x = np.asarray(x, dtype=float)
        return ((x > lo) & (x < hi)).astype(float)


def mixture_event(a: float, xi: float = 1.0) -> Event:
    """{xi sqrt(W) Z > a} on samples (z, w); a bare z array means W = 1."""
    def payoff(x):
        if isinstance(x, tuple):
            z, w = x
            return (xi * np.sqrt(w) * z > a).astype(float)
        return (xi * np.asarray(x) > a).astype(float)
    return Event("mixture", a, payoff)


# --------------------------------------------------------------------------
# Solvers
# --------------------------------------------------------------------------

@dataclass
class FamilyTilt:
    """Optimal tilt of a family for one event and one active subset."""
    family: SufficientFamily
    solution: TiltSolution
    subset: Tuple[str, ...]
    pilot_hits: int = 0

    @property
    def delta(self) -> np.ndarray:
        return self.solution.delta

    def describe(self) -> Dict[str, Any]:
        theta, eta = self.solution.theta, self.solution.eta
        info: Dict[str, Any] = {"subset": "+".join(self.subset), "iterations": self.solution.iterations}
        if self.solution.boundary:
            info["boundary"] = True
        if isinstance(self.family, StdNormalFamily):
            mu, var = self.family.to_mean_var(theta, eta)
            info.update(mu=mu, sigma=float(np.sqrt(var)))
        elif isinstance(self.family, MvnFamily):
            mu, cov = self.family.to_mean_cov(theta, eta)
            info.update(mu=mu.tolist(), sigma=np.sqrt(np.diag(cov)).tolist(),
                        rho=float(cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1])))
        elif isinstance(self.family, GammaFamily):
            info.update(theta=float(theta[0]), eta=float(eta[0]))
        elif isinstance(self.family, NormalMixtureFamily):
            mu, var = StdNormalFamily.to_mean_var(theta[:1], eta[:1])
            info.update(mu=mu, sigma=float(np.sqrt(var)), theta=float(theta[1]), eta=float(eta[1]))
        return info


def _require_converged(solution: TiltSolution, what: str):
    if not solution.converged:
        raise ConvergenceError(
            f"{what} did not converge",
            iterations=solution.iterations,
            residual=solution.final_residual,
        )


def _normal_tail_moments(a: float, theta, eta) -> np.ndarray:
    """E[X], E[X^2] of the conjugate normal law truncated to (a, inf)."""
    mean, var = StdNormalFamily.conjugate_law(theta, eta)
    std = np.sqrt(var)
    alpha0 = (a - mean) / std
    hazard = float(normal_hazard(alpha0))
    first = mean + std * hazard
    variance = var * (1.0 + alpha0 * hazard - hazard * hazard)
    return np.array([first, variance + first * first])


def normal_tail_solution(
    a: float,
    subset: Sequence[str] = ("mu", "sigma"),
    eps: float = CLOSED_FORM_EPS,
    max_iter: int = 100,
) -> FamilyTilt:
    """Optimal normal tilt for {X > a} with closed-form truncated moments."""
    if not np.isfinite(a):
        raise ModelDomainError("event threshold must be finite")
    family = StdNormalFamily()
    mask = family.select(subset)
    if mask.all():
        edge = _normal_edge_solution(a, eps)
        if edge is not None:
            return FamilyTilt(family, edge, tuple(subset))
    solution = solve_restricted(
        family,
        lambda delta: family.grad_psi_delta(delta) - _normal_tail_moments(a, *family.split(delta)),
        mask,
        eps=eps,
        max_iter=max_iter,
        edges={},
    )
    return FamilyTilt(family, solution, tuple(subset))


def _normal_edge_solution(a: float, eps: float) -> Optional[TiltSolution]:
    """Joint tilt for {X > a} with eta pinned next to -1/2, or None if G is minimized inside.

    On the edge the truncated conjugate law is exponential with rate theta, so
    the mean equation becomes var * theta^2 - a * theta - 1 = 0.
    """
    eta = -0.5 + EDGE_OFFSET
    var = 1.0 / (1.0 - 2.0 * eta)
    theta = (a + np.sqrt(a * a + 4.0 * var)) / (2.0 * var)
    mu = theta * var
    # d ln G / d eta on the edge
    slope = var + mu * mu - (a * a + 2.0 * a / theta + 2.0 / (theta * theta))
    if slope < -1e-12:
        return None
    residual = float((mu - a - 1.0 / theta) ** 2)
    return TiltSolution(
        theta=np.array([theta]),
        eta=np.array([eta]),
        iterations=0,
        final_residual=residual,
        converged=residual < eps,
        boundary=True,
    )


def normal_tilt_fixed_point(a: float, subset: Sequence[str] = ("mu", "sigma")) -> Tuple[float, float]:
    """(mu*, sigma*) of the optimal tilted normal for P(X > a)."""
    tilt = normal_tail_solution(a, subset)
    _require_converged(tilt.solution, f"normal tilt for a={a}")
    mu, var = StdNormalFamily.to_mean_var(tilt.solution.theta, tilt.solution.eta)
    return mu, float(np.sqrt(var))


def one_param_normal_tilt(a: float) -> float:
    """Mean-only tilt for P(X > a): the root of 2 theta = hazard(a + theta)."""
    if not np.isfinite(a):
        raise ModelDomainError("event threshold must be finite")

    def equation(theta: float) -> float:
        return 2.0 * theta - float(normal_hazard(a + theta))

    upper = abs(a) + 10.0
    return float(optimize.brentq(equation, 0.0, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))


def _gamma_interval_moments(shape: float, rate: float, lo: float, hi: float) -> np.ndarray:
    """E[ln X], E[X] for density x^(shape-1) exp(-rate x) restricted to (lo, hi)."""
    if not np.isfinite(hi) and rate <= 0:
        raise ModelDomainError("unbounded interval requires a positive conjugate rate")

    def log_kernel(x):
        return (shape - 1.0) * np.log(x) - rate * x

    anchors = [p for p in (lo, hi) if 0 < p < np.inf]
    if rate > 0 and shape > 1:
        mode = (shape - 1.0) / rate
        if lo < mode < hi:
            anchors.append(mode)
    reference = max(log_kernel(p) for p in anchors) if anchors else 0.0

    def integral(weight: Callable[[float], float]) -> float:
        value, _ = integrate.quad(
            lambda x: np.exp(log_kernel(x) - reference) * weight(x),
            lo, hi, limit=200, epsabs=0.0, epsrel=1e-12,
        )
        return value

    mass = integral(lambda x: 1.0)
    if not mass > 0:
        raise ModelDomainError("conjugate gamma law puts no mass on the event")
    return np.array([integral(np.log) / mass, integral(lambda x: x) / mass])


def _gamma_edge_solution(alpha: float, beta: float, lo: float, eps: float) -> Optional[TiltSolution]:
    """Joint tilt for {X > lo} with the conjugate rate pinned at zero (eta = -beta).

    There the truncated conjugate law is Pareto with index k = theta - alpha,
    so E[ln X] = ln lo + 1/k and only the log-moment equation is left.
    Returns None when G is minimized inside the domain.
    """
    offset = np.log(2.0 * beta) + np.log(lo)

    def equation(theta: float) -> float:
        return float(digamma(alpha + theta)) - offset - 1.0 / (theta - alpha)

    left, right = alpha + 1e-9 * max(1.0, alpha), alpha + 1.0
    for _ in range(200):
        if equation(right) > 0:
            break
        right = alpha + 2.0 * (right - alpha)
    else:
        return None
    theta = float(optimize.brentq(equation, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))
    k = theta - alpha
    if k <= 1.0:
        # conjugate mean is infinite: G decreases into the domain
        return None
    slope = (alpha + theta) / (2.0 * beta) - lo * k / (k - 1.0)
    if slope < -1e-12:
        return None
    residual = equation(theta) ** 2
    return TiltSolution(
        theta=np.array([theta]),
        eta=np.array([-beta]),
        iterations=0,
        final_residual=residual,
        converged=residual < eps,
        boundary=True,
    )


def gamma_tilt_equations(
    event: Any,
    alpha: float = 4.0,
    beta: float = 0.5,
    subset: Sequence[str] = ("theta", "eta"),
    *,
    closed_form: bool = True,
    pilot_size: int = 100_000,
    stream: Optional[RandomStream] = None,
    eps: Optional[float] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    refine_rounds: int = 0,
) -> FamilyTilt:
    """Optimal Gamma tilt for a payoff on the positive half-line.

    Half-line events use deterministic quadrature of the truncated conjugate
    moments; any other payoff (or ``closed_form=False``) goes through a pilot.
    """
    family = GammaFamily(alpha, beta)
    if closed_form and isinstance(event, HalfLineEvent):
        lo, hi = event.interval
        tolerance = CLOSED_FORM_EPS if eps is None else eps
        if family.select(subset).all() and lo > 0 and not np.isfinite(hi):
            edge = _gamma_edge_solution(alpha, beta, lo, tolerance)
            if edge is not None:
                return FamilyTilt(family, edge, tuple(subset))

        def extra_domain(delta):
            conj_shape = alpha - delta[0]
            conj_rate = beta + delta[1]
            if not np.isfinite(hi) and conj_rate <= DOMAIN_MARGIN:
                return False
            return not (lo == 0.0 and conj_shape <= DOMAIN_MARGIN)

        def residual(delta):
            return family.grad_psi_delta(delta) - _gamma_interval_moments(alpha - delta[0], beta + delta[1], lo, hi)

        solution = solve_restricted(
            family, residual, family.select(subset),
            eps=tolerance,
            max_iter=max(max_iter, 100),
            extra_domain=extra_domain,
        )
        return FamilyTilt(family, solution, tuple(subset))

    return solve_sampled_tilt(
        family, event, subset,
        pilot_size=pilot_size, stream=stream, eps=DEFAULT_EPS if eps is None else eps,
        max_iter=max_iter, refine_rounds=refine_rounds,
    )


def solve_sampled_tilt(
    family: SufficientFamily,
    payoff: Payoff,
    subset: Sequence[str],
    *,
    pilot_size: int = 100_000,
    stream: Optional[RandomStream] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    refine_rounds: int = 0,
) -> FamilyTilt:
    """Generic pilot-based solve, optionally redrawing the pilot from the current tilt."""
    stream = stream or RandomStream(seed=0)
    rng = stream.generator()
    mask = family.select(subset)

    samples = family.sample_base(rng, pilot_size)
    pilot = Pilot.from_samples(family, samples, payoff(samples))
    solution = solve_restricted(
        family, lambda delta: foc_residual(family, pilot, delta), mask, eps=eps, max_iter=max_iter
    )

    for round_index in range(refine_rounds):
        delta = solution.delta
        theta, eta = family.split(delta)
        samples = family.sample_tilted(theta, eta, rng, pilot_size)
        pilot = Pilot.from_samples(
            family, samples, payoff(samples), log_base_ratio=family.log_likelihood_ratio(samples, delta)
        )
        solution = solve_restricted(
            family, lambda d: foc_residual(family, pilot, d), mask,
            eps=eps, max_iter=max_iter, start=delta,
        )
        logger.debug("Pilot refined", round=round_index + 1, hits=pilot.hits, residual=solution.final_residual)

    return FamilyTilt(family, solution, tuple(subset), pilot_hits=pilot.hits)


def mvn_tilt_equations(
    event: Payoff,
    d: int = 2,
    subset: Sequence[str] = ("mu", "sigma", "rho"),
    *,
    pilot_size: int = 200_000,
    stream: Optional[RandomStream] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    refine_rounds: int = 1,
) -> FamilyTilt:
    """Optimal (mu, Sigma) for an event on R^d via sampled conjugate expectations."""
    return solve_sampled_tilt(
        MvnFamily(d), event, subset,
        pilot_size=pilot_size, stream=stream, eps=eps, max_iter=max_iter, refine_rounds=refine_rounds,
    )


def mixture_tilt(
    a: float,
    xi: float = 1.0,
    gamma: Optional[GammaParams] = GammaParams(4.0, 0.5),
    subset: Sequence[str] = ("mu", "theta"),
    *,
    pilot_size: int = 200_000,
    stream: Optional[RandomStream] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    refine_rounds: int = 1,
) -> FamilyTilt:
    """Tilt of (Z, W) for {xi sqrt(W) Z > a}; ``gamma=None`` means W = 1."""
    if xi <= 0:
        raise ModelDomainError("mixture scale xi must be positive")
    if gamma is None:
        family: SufficientFamily = StdNormalFamily()
        subset = tuple(s for s in subset if s in ("mu", "sigma"))
    else:
        family = NormalMixtureFamily(gamma.shape, gamma.rate)
    return solve_sampled_tilt(
        family, mixture_event(a, xi), subset,
        pilot_size=pilot_size, stream=stream, eps=eps, max_iter=max_iter, refine_rounds=refine_rounds,
    )


# --------------------------------------------------------------------------
# Comparing tilts
# --------------------------------------------------------------------------

def compare_tilts(
    family: SufficientFamily,
    payoff: Payoff,
    tilts: Mapping[str, np.ndarray],
    stream: RandomStream,
    size: int,
) -> Dict[str, EstimatorStats]:
    """Crude and IS arms on common random numbers: every arm restarts the same stream."""
    results = {"crude": summarize(crude_summands(family, payoff, stream.generator(), size))}
    for label, delta in tilts.items():
        results[label] = summarize(tilted_summands(family, payoff, np.asarray(delta), stream.generator(), size))
    return results
