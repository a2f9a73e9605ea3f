"""
Experiment runner that turns run configurations into report rows.
"""

import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import structlog

from ..engine.importance_sampler import (
    EstimateReport,
    ExperimentConfig,
    crude_estimate,
    importance_sampling_estimate,
)
from ..observability.logging import (
    generate_run_id,
    log_experiment_end,
    log_experiment_error,
    log_experiment_start,
    set_run_id,
)
from ..observability.metrics import metrics_collector
from ..observability.tracing import traced
from ..portfolio.model import PortfolioModel, ShockSpec, exposure_profile
from ..portfolio.presets import factor_covariance, preset
from .config_loader import PRESETS, ModelSection, RunConfig, RunMode, ShockSection, config_loader
from .errors import ConfigError, ModelDomainError, NumericalFailure

logger = structlog.get_logger(__name__)

TIMING_COLUMNS = ("search_time_s", "estimate_time_s")


class ExecutionStatus(str, Enum):
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class ReportRow:
    """One estimator arm of one experiment."""
    experiment_id: str
    mode: str
    estimate: float
    variance: float
    std_error: float
    vr_factor: float
    iterations: int
    search_time_s: float
    estimate_time_s: float
    seed: int
    tau: int
    b1: int
    b2: int
    converged: Optional[bool]
    reference: Optional[float]
    config_hash: str
    status: str = ExecutionStatus.COMPLETED.value
    error: Optional[str] = None

    @classmethod
    def from_report(cls, experiment_id: str, report: EstimateReport, run: "ResolvedRun") -> "ReportRow":
        return cls(
            experiment_id=experiment_id,
            mode=report.arm,
            estimate=report.estimate,
            variance=report.variance,
            std_error=report.std_error,
            vr_factor=report.vr_factor,
            iterations=report.newton_iterations,
            search_time_s=round(report.search_time, 3),
            estimate_time_s=round(report.estimate_time, 3),
            seed=run.experiment.seed,
            tau=report.tau,
            b1=run.experiment.B1 if report.arm == "is" else 0,
            b2=run.experiment.B2,
            converged=report.converged,
            reference=run.reference,
            config_hash=run.config_hash,
        )

    @classmethod
    def failed(cls, experiment_id: str, mode: str, run: "ResolvedRun", error: str) -> "ReportRow":
        nan = float("nan")
        return cls(
            experiment_id=experiment_id, mode=mode, estimate=nan, variance=nan, std_error=nan,
            vr_factor=nan, iterations=0, search_time_s=0.0, estimate_time_s=0.0,
            seed=run.experiment.seed, tau=run.tau, b1=run.experiment.B1, b2=run.experiment.B2,
            converged=None, reference=run.reference, config_hash=run.config_hash,
            status=ExecutionStatus.FAILED.value, error=error,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ExecutionResult:
    """Result of an experiment execution."""
    execution_id: str
    experiment_id: str
    status: ExecutionStatus
    rows: List[ReportRow] = field(default_factory=list)
    error: Optional[str] = None
    execution_time_ms: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ResolvedRun:
    """A run configuration turned into engine objects."""
    name: str
    model: PortfolioModel
    shock: ShockSpec
    experiment: ExperimentConfig
    mode: RunMode
    config_hash: str
    reference: Optional[float] = None
    allow_unconverged: bool = False

    @property
    def tau(self) -> int:
        return self.experiment.resolve_tau(self.model)


def build_model(section: ModelSection) -> PortfolioModel:
    """Explicit (non-preset) model section to a PortfolioModel."""
    if section.loadings is not None:
        loadings = np.asarray(section.loadings, dtype=float)
    else:
        loadings = np.full((section.n, section.d), section.loading)
    if isinstance(section.exposures, list):
        exposures = np.asarray(section.exposures)
    else:
        exposures = exposure_profile(section.exposures or "equal", section.n)
    cov = None
    if section.factor_sigmas is not None:
        cov = factor_covariance(section.factor_sigmas, section.rho_hat or 0.0)
    return PortfolioModel(
        loadings=loadings,
        thresholds=section.thresholds,
        exposures=exposures,
        idio_std=section.sigma_eps or 1.0,
        factor_cov=cov,
        direction=section.direction or "above",
    )


def build_shock(section: ShockSection) -> ShockSpec:
    if section.variant == "t_copula":
        return ShockSpec.t_copula(section.nu, shared=section.shared)
    if section.variant == "gamma_direct":
        return ShockSpec.gamma_direct(section.alpha, section.beta, shared=section.shared)
    return ShockSpec.degenerate()


def resolve_run(config: RunConfig, threads: int = 1, chunk_size: int = 1024) -> ResolvedRun:
    """Build model, shock and engine settings; domain problems become ConfigError."""
    section = config.experiment
    try:
        reference = None
        if config.model.preset is not None:
            built = preset(config.model.preset, **config.model.overrides())
            model, shock, constants = built.model, built.shock, built.constants
            if config.shock is not None:
                shock = build_shock(config.shock)
            b = section.b if section.b is not None else (None if section.tau is not None else constants.b)
            if config.shock is None and b is not None:
                reference = constants.reference.get(round(b, 6))
            defaults = {"B1": constants.B1, "B2": constants.B2, "tilt": constants.tilt}
        else:
            model, shock = build_model(config.model), build_shock(config.shock)
            b = section.b
            defaults = {"B1": 5_000, "B2": 10_000, "tilt": ("mu", "eta")}
        shock.validate_for(model)
        experiment = ExperimentConfig(
            B1=section.B1 or defaults["B1"],
            B2=section.B2 or defaults["B2"],
            eps=section.eps,
            max_iter=section.max_iter,
            seed=section.seed,
            tilt=tuple(section.tilt) if section.tilt else tuple(defaults["tilt"]),
            b=b,
            tau=section.tau,
            threads=threads,
            chunk_size=chunk_size,
            refine_rounds=section.refine_rounds,
        )
        experiment.resolve_tau(model)
    except ModelDomainError as exc:
        raise ConfigError(str(exc)) from exc

    return ResolvedRun(
        name=config.name,
        model=model,
        shock=shock,
        experiment=experiment,
        mode=section.mode,
        config_hash=config.config_hash(),
        reference=reference,
        allow_unconverged=section.allow_unconverged,
    )


def _as_config(source: Union[str, Path, RunConfig]) -> RunConfig:
    if isinstance(source, RunConfig):
        return source
    if isinstance(source, str) and source in PRESETS:
        return RunConfig(name=source, model=ModelSection(preset=source))
    return config_loader.load_run(source)


class ExperimentRunner:
    """Runs the crude and importance-sampling arms of an experiment."""

    def __init__(self, threads: int = 1, chunk_size: int = 1024):
        self.threads = threads
        self.chunk_size = chunk_size
        self.executions: Dict[str, ExecutionResult] = {}

    def run(self, source: Union[str, Path, RunConfig, ResolvedRun], **overrides: Any) -> ExecutionResult:
        """Run a preset name, config path, RunConfig or already resolved run.

        ``overrides`` replace experiment fields (seed, B1, B2, mode, ...).
        """
        if isinstance(source, ResolvedRun):
            run = source
        else:
            config = _as_config(source).with_overrides(**overrides)
            run = resolve_run(config, self.threads, self.chunk_size)

        execution_id = generate_run_id()
        set_run_id(execution_id)
        start = time.perf_counter()
        result = ExecutionResult(execution_id=execution_id, experiment_id=run.name, status=ExecutionStatus.COMPLETED)
        self.executions[execution_id] = result
        log_experiment_start(run.name, run.mode.value, run.config_hash, run.experiment.seed)

        arms = ["crude", "is"] if run.mode == RunMode.BOTH else [run.mode.value]
        with traced("experiment", experiment=run.name, mode=run.mode.value):
            for arm in arms:
                result.rows.append(self._run_arm(run, arm))

        failures = [row.error for row in result.rows if row.status == ExecutionStatus.FAILED.value]
        duration = time.perf_counter() - start
        result.execution_time_ms = int(duration * 1000)
        result.metadata = {"tau": run.tau, "config_hash": run.config_hash, "n": run.model.n, "d": run.model.d}
        if failures:
            result.status = ExecutionStatus.FAILED
            result.error = "; ".join(failures)
            log_experiment_error(run.name, result.error, duration)
        else:
            log_experiment_end(run.name, result.status.value, duration, len(result.rows))
        return result

    def _run_arm(self, run: ResolvedRun, arm: str) -> ReportRow:
        try:
            with traced(f"arm.{arm}", experiment=run.name):
                if arm == "crude":
                    report = crude_estimate(run.model, run.shock, run.experiment)
                else:
                    report = importance_sampling_estimate(run.model, run.shock, run.experiment)
            row = ReportRow.from_report(run.name, report, run)
            if arm == "is" and not report.converged and not run.allow_unconverged:
                row.status = ExecutionStatus.FAILED.value
                row.error = (f"tilt search did not converge after {report.newton_iterations} iterations; "
                             "raise max_iter or B1, or set allow_unconverged")
        except NumericalFailure as exc:
            logger.error("Arm failed", experiment=run.name, arm=arm, error=str(exc))
            row = ReportRow.failed(run.name, arm, run, str(exc))

        metrics_collector.record_experiment(arm, row.status)
        if row.status == ExecutionStatus.COMPLETED.value and math.isfinite(row.vr_factor):
            metrics_collector.set_vr_factor(f"{run.name}.{arm}", row.vr_factor)
        return row


def run_experiment(source: Union[str, Path, RunConfig, ResolvedRun], threads: int = 1,
                   chunk_size: int = 1024, **overrides: Any) -> ExecutionResult:
    """Run one experiment with a throwaway runner."""
    return ExperimentRunner(threads, chunk_size).run(source, **overrides)


def rows_to_frame(rows: List[ReportRow]) -> pd.DataFrame:
    return pd.DataFrame([row.to_dict() for row in rows])


def write_report(frame: pd.DataFrame, path: Optional[Union[str, Path]] = None, fmt: str = "csv") -> str:
    """Render a report as csv, tsv or json; also write it when ``path`` is given."""
    if fmt == "json":
        text = frame.to_json(orient="records", indent=2) + "\n"
    else:
        text = frame.to_csv(index=False, sep="\t" if fmt == "tsv" else ",")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
        logger.info("Report written", path=str(path), rows=len(frame))
    return text
