"""
Unit tests for metrics, tracing and logging helpers.
"""

import logging

import structlog

from src.observability.logging import add_run_id, generate_run_id, set_run_id, setup_logging
from src.observability.metrics import MetricsCollector
from src.observability.tracing import setup_tracing, traced


class TestMetricsCollector:

    def setup_method(self):
        self.collector = MetricsCollector()

    def test_records_engine_activity(self):
        self.collector.record_samples("pilot", 5000)
        self.collector.record_phase("search", 0.25)
        self.collector.record_search(7)
        self.collector.record_experiment("is", "completed")
        self.collector.set_vr_factor("base.is", 812.5)
        text = self.collector.get_metrics()
        assert 'tiltrisk_samples_total{phase="pilot"} 5000.0' in text
        assert 'tiltrisk_experiments_total{kind="is",status="completed"} 1.0' in text
        assert 'tiltrisk_last_vr_factor{experiment="base.is"} 812.5' in text
        assert "tiltrisk_newton_iterations_bucket" in text

    def test_write_textfile(self, tmp_path):
        path = tmp_path / "metrics.prom"
        self.collector.write_textfile(str(path))
        assert "tiltrisk_service_info" in path.read_text()


class TestTracing:

    def test_setup_is_idempotent(self):
        first = setup_tracing()
        assert setup_tracing() is first

    def test_traced_sets_attributes(self):
        setup_tracing()
        with traced("unit.span", tau=15, blocks="mu,eta") as span:
            assert span.is_recording()
            assert span.attributes["tau"] == 15


class TestLogging:

    def test_run_id_processor(self):
        run_id = generate_run_id()
        set_run_id(run_id)
        assert add_run_id(None, "info", {"event": "x"})["run_id"] == run_id
        assert len(run_id) == 12

    def test_setup_logging_level(self):
        setup_logging("WARNING", "json")
        assert logging.getLogger().level == logging.WARNING
        structlog.get_logger("test").info("ignored")
        setup_logging("INFO")

    def test_positional_arguments_and_bytes(self, capsys):
        setup_logging("INFO", "json")
        kinds = [type(p) for p in structlog.get_config()["processors"]]
        assert structlog.stdlib.PositionalArgumentsFormatter in kinds
        assert structlog.processors.UnicodeDecoder in kinds

        structlog.get_logger("test.positional").info("grid %s of %d", "alpha", 3, label=b"tail")
        line = capsys.readouterr().err.strip().splitlines()[-1]
        assert '"event": "grid alpha of 3"' in line
        assert '"label": "tail"' in line
        setup_logging("INFO")
