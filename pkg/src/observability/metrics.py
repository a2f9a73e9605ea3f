"""
Prometheus metrics for simulation runs.
"""

from prometheus_client import Counter, Histogram, Gauge, Info, CollectorRegistry, generate_latest
from pathlib import Path
import structlog

logger = structlog.get_logger(__name__)


class MetricsCollector:
    """Collects and exports Prometheus metrics for experiments."""

    def __init__(self):
        self.registry = CollectorRegistry()
        self._setup_metrics()

    def _setup_metrics(self):
        """Setup Prometheus metrics."""
        self.samples = Counter(
            'tiltrisk_samples_total',
            'Total number of Monte Carlo samples drawn',
            ['phase'],
            registry=self.registry
        )

        self.experiments = Counter(
            'tiltrisk_experiments_total',
            'Total number of experiment arms executed',
            ['kind', 'status'],
            registry=self.registry
        )

        self.phase_duration = Histogram(
            'tiltrisk_phase_duration_seconds',
            'Wall time spent per engine phase',
            ['phase'],
            registry=self.registry
        )

        self.newton_iterations = Histogram(
            'tiltrisk_newton_iterations',
            'Outer Newton iterations per tilt search',
            buckets=(1, 2, 3, 5, 8, 10, 15, 20, 50),
            registry=self.registry
        )

        self.last_vr_factor = Gauge(
            'tiltrisk_last_vr_factor',
            'Variance reduction factor of the last IS arm',
            ['experiment'],
            registry=self.registry
        )

        self.service_info = Info(
            'tiltrisk_service_info',
            'Service information',
            registry=self.registry
        )
        self.service_info.info({
            'version': '1.0.0',
            'service': 'tiltrisk'
        })

    def record_samples(self, phase: str, count: int):
        """Record drawn samples."""
        self.samples.labels(phase=phase).inc(count)

    def record_phase(self, phase: str, duration: float):
        """Record the duration of an engine phase."""
        self.phase_duration.labels(phase=phase).observe(duration)

    def record_search(self, iterations: int):
        """Record the iteration count of a tilt search."""
        self.newton_iterations.observe(iterations)

    def record_experiment(self, kind: str, status: str):
        """Record an executed experiment arm."""
        self.experiments.labels(kind=kind, status=status).inc()

    def set_vr_factor(self, experiment: str, value: float):
        """Set the variance reduction factor of an experiment."""
        self.last_vr_factor.labels(experiment=experiment).set(value)

    def get_metrics(self) -> str:
        """Get metrics in Prometheus format."""
        return generate_latest(self.registry).decode('utf-8')

    def write_textfile(self, path: str):
        """Write the exposition text to a file."""
        Path(path).write_text(self.get_metrics())
        logger.info("Metrics written", path=path)


# Global metrics collector
metrics_collector = MetricsCollector()
