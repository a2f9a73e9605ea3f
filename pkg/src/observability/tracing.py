"""
OpenTelemetry tracing for engine phases.
"""

from contextlib import contextmanager
from typing import Iterator

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import ConsoleSpanExporter, SimpleSpanProcessor
import structlog

logger = structlog.get_logger(__name__)


def setup_tracing(service_name: str = "tiltrisk", console: bool = False) -> TracerProvider:
    """Setup OpenTelemetry tracing."""
    resource = Resource.create({
        "service.name": service_name,
        "service.version": "1.0.0",
    })

    current = trace.get_tracer_provider()
    if isinstance(current, TracerProvider):
        return current

    tracer_provider = TracerProvider(resource=resource)
    if console:
        tracer_provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
    trace.set_tracer_provider(tracer_provider)

    logger.debug("OpenTelemetry tracing configured", service=service_name, console=console)
    return tracer_provider


def get_tracer(name: str):
    """Get a tracer instance."""
    return trace.get_tracer(name)


@contextmanager
def traced(name: str, **attributes) -> Iterator[trace.Span]:
    """Run a block inside a span carrying the given attributes."""
    tracer = get_tracer("tiltrisk")
    with tracer.start_as_current_span(name) as span:
        for key, value in attributes.items():
            span.set_attribute(key, value)
        yield span
