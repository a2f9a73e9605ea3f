"""
Process-level runtime settings read from the environment.
"""

from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Settings that affect how an experiment runs, never what it computes."""

    model_config = SettingsConfigDict(env_prefix="TILTRISK_", extra="ignore")

    log_level: str = "INFO"
    log_format: str = "console"
    threads: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=1024, ge=1)
    metrics_path: Optional[str] = None
    tracing_console: bool = False


def get_settings() -> RuntimeSettings:
    """Build settings from the current environment."""
    return RuntimeSettings()
