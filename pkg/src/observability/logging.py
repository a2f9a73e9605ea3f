"""
Structured logging for experiment runs.

Log lines go to stderr; stdout carries report rows only. Every event emitted
while an experiment executes is stamped with that experiment's run id.
"""

import logging
import sys
import uuid
from contextvars import ContextVar
from typing import Any, Dict, Optional

import structlog

_run_id: ContextVar[Optional[str]] = ContextVar("run_id", default=None)


def get_run_id() -> Optional[str]:
    return _run_id.get()


def set_run_id(value: Optional[str]):
    _run_id.set(value)


def generate_run_id() -> str:
    """Short random id, one per experiment execution."""
    return uuid.uuid4().hex[:12]


def add_run_id(logger, method_name, event_dict):
    """structlog processor: attach the active run id, if any."""
    current = get_run_id()
    if current:
        event_dict.setdefault("run_id", current)
    return event_dict


def setup_logging(log_level: str = "INFO", log_format: str = "console"):
    """Configure structlog over stdlib logging.

    ``log_format`` is ``json`` for machine-readable lines, anything else
    selects the plain console renderer.
    """
    renderer = (
        structlog.processors.JSONRenderer()
        if log_format == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            add_run_id,
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, log_level.upper()),
        force=True,
    )
    get_logger(__name__).debug("logging configured", log_level=log_level, format=log_format)


def get_logger(name: str) -> structlog.BoundLogger:
    return structlog.get_logger(name)


_events = get_logger("tiltrisk.events")


def log_experiment_start(experiment_id: str, mode: str, config_hash: str, seed: int):
    _events.info("experiment started", experiment_id=experiment_id, mode=mode, config_hash=config_hash, seed=seed)


def log_experiment_end(experiment_id: str, status: str, duration_s: float, rows: int):
    _events.info(
        "experiment completed",
        experiment_id=experiment_id,
        status=status,
        duration_s=round(duration_s, 3),
        rows=rows,
    )


def log_experiment_error(experiment_id: str, error: str, duration_s: float):
    _events.error("experiment failed", experiment_id=experiment_id, error=error, duration_s=round(duration_s, 3))


def log_tilt_search(converged: bool, iterations: int, residual: float, parameters: Dict[str, Any]):
    """Unconverged searches are logged as warnings with the last iterate."""
    emit = _events.info if converged else _events.warning
    emit("tilt search finished", converged=converged, iterations=iterations, residual=residual, **parameters)


def log_estimate(arm: str, estimate: float, std_error: float, samples: int, duration_s: float):
    _events.info(
        "estimate computed",
        arm=arm,
        estimate=estimate,
        std_error=std_error,
        samples=samples,
        duration_s=round(duration_s, 3),
    )
