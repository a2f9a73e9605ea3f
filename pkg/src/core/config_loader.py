"""
Configuration loader for experiment runs.
Supports YAML-based configuration with strict validation and environment overrides.
"""

import hashlib
import json
import os
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

logger = structlog.get_logger(__name__)

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

PRESETS = ("one_factor_t", "three_factor_base", "three_factor_gig", "cdx_ig_8factor", "fft_check")


class RunMode(str, Enum):
    CRUDE = "crude"
    IS = "is"
    BOTH = "both"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    """Either a preset with overrides, or an explicit homogeneous-or-matrix model."""
    preset: Optional[str] = None
    n: Optional[int] = Field(default=None, ge=1)
    d: Optional[int] = Field(default=None, ge=1)
    loading: Optional[float] = None
    loadings: Optional[List[List[float]]] = None
    thresholds: Optional[Union[float, List[float]]] = None
    exposures: Optional[Union[Literal["equal", "two_level", "five_level"], List[int]]] = None
    sigma_eps: Optional[float] = Field(default=None, gt=0)
    direction: Optional[Literal["above", "below"]] = None
    factor_sigmas: Optional[List[float]] = None
    rho_hat: Optional[float] = Field(default=None, gt=-1, lt=1)

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, v):
        if v is not None and v not in PRESETS:
            raise ValueError(f"unknown preset '{v}' (known: {', '.join(PRESETS)})")
        return v

    @field_validator("factor_sigmas")
    @classmethod
    def validate_sigmas(cls, v):
        if v is not None and any(s <= 0 for s in v):
            raise ValueError("factor standard deviations must be positive")
        return v

    @field_validator("exposures")
    @classmethod
    def validate_exposures(cls, v):
        if isinstance(v, list) and any(c < 0 for c in v):
            raise ValueError("exposures must be non-negative integers")
        return v

    @model_validator(mode="after")
    def validate_model(self):
        if self.preset is not None:
            fixed = [k for k in ("d", "loadings", "thresholds", "direction") if getattr(self, k) is not None]
            if fixed:
                raise ValueError(f"{', '.join(fixed)} cannot override a preset")
            if isinstance(self.exposures, list):
                raise ValueError("a preset takes an exposure profile name, not a vector")
            return self

        if self.n is None or self.thresholds is None:
            raise ValueError("an explicit model needs n and thresholds")
        if self.loadings is not None:
            matrix = np.asarray(self.loadings, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != self.n:
                raise ValueError(f"loadings must be an {self.n} x d matrix")
        elif self.d is None or self.loading is None:
            raise ValueError("an explicit model needs loadings, or d and loading")
        else:
            matrix = np.full((self.n, self.d), self.loading)
        if np.any(np.sum(matrix ** 2, axis=1) > 1.0 + 1e-12):
            raise ValueError("squared loadings of an obligor sum to more than 1")
        if isinstance(self.thresholds, list) and len(self.thresholds) != self.n:
            raise ValueError(f"thresholds must have {self.n} entries")
        if isinstance(self.exposures, list) and len(self.exposures) != self.n:
            raise ValueError(f"exposures must have {self.n} entries")
        if self.factor_sigmas is not None and len(self.factor_sigmas) != matrix.shape[1]:
            raise ValueError("factor_sigmas must have one entry per factor")
        return self

    def overrides(self) -> Dict[str, Any]:
        """Preset overrides named in this section."""
        mapping = {"n": "n", "loading": "loading", "sigma_eps": "sigma_eps", "rho_hat": "rho_hat",
                   "factor_sigmas": "sigmas", "exposures": "exposures"}
        return {target: getattr(self, source) for source, target in mapping.items()
                if getattr(self, source) is not None}


class ShockSection(_Section):
    variant: Literal["t_copula", "gamma_direct", "degenerate"]
    nu: Optional[List[float]] = None
    alpha: Optional[List[float]] = None
    beta: Optional[List[float]] = None
    shared: bool = False

    @model_validator(mode="after")
    def validate_shock(self):
        if self.variant == "t_copula":
            if not self.nu or any(v <= 0 for v in self.nu):
                raise ValueError("t_copula needs positive degrees of freedom nu")
        elif self.variant == "gamma_direct":
            if not self.alpha or not self.beta or len(self.alpha) != len(self.beta):
                raise ValueError("gamma_direct needs alpha and beta of equal length")
            if any(a <= 0 for a in self.alpha) or any(b <= 0 for b in self.beta):
                raise ValueError("gamma_direct alpha and beta must be positive")
        if self.shared and len(self.nu or self.alpha or [0]) != 1:
            raise ValueError("a shared shock takes a single parameter set")
        return self


class ExperimentSection(_Section):
    b: Optional[float] = None
    tau: Optional[int] = Field(default=None, ge=-1)
    B1: Optional[int] = Field(default=None, ge=1)
    B2: Optional[int] = Field(default=None, ge=1)
    eps: float = Field(default=1e-4, gt=0)
    max_iter: int = Field(default=20, ge=1)
    seed: int = Field(default=20240101, ge=0)
    tilt: Optional[List[Literal["mu", "theta", "eta"]]] = None
    mode: RunMode = RunMode.BOTH
    refine_rounds: int = Field(default=0, ge=0)
    allow_unconverged: bool = False

    @model_validator(mode="after")
    def validate_level(self):
        if self.b is not None and self.tau is not None:
            raise ValueError("give b or tau, not both")
        return self


class OutputSection(_Section):
    path: Optional[str] = None
    format: Literal["csv", "tsv", "json"] = "csv"


class RunConfig(_Section):
    name: str = "run"
    model: ModelSection
    shock: Optional[ShockSection] = None
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def validate_run(self):
        if self.model.preset is None and self.shock is None:
            raise ValueError("an explicit model needs a shock section")
        if self.model.preset is None and self.experiment.b is None and self.experiment.tau is None:
            raise ValueError("an explicit model needs experiment.b or experiment.tau")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, **experiment: Any) -> "RunConfig":
        """Copy with experiment fields replaced (None values are ignored)."""
        updates = {k: v for k, v in experiment.items() if v is not None}
        if not updates:
            return self
        section = self.experiment.model_dump()
        section.update(updates)
        try:
            return self.model_copy(update={"experiment": ExperimentSection(**section)})
        except ValidationError as exc:
            error = exc.errors()[0]
            key = ".".join(["experiment"] + [str(p) for p in error["loc"]])
            raise ConfigError(f"{key}: {error['msg']}", key=key) from exc


def _node_line(root: Optional[yaml.Node], loc: Sequence[Any]) -> Tuple[Optional[int], Optional[str]]:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    node, line, key = root, None, None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            match = next(((k, v) for k, v in node.value if k.value == str(part)), None)
            if match is None:
                break
            key = str(part)
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    if line is None and root is not None:
        line = root.start_mark.line + 1
    return line, key


class ConfigLoader:
    """Loads and validates run configurations from YAML files."""

    def __init__(self, config_dir: str = "config"):
        self.config_dir = Path(config_dir)
        self.experiments_dir = self.config_dir / "experiments"

    def load_run(self, path: Union[str, Path]) -> RunConfig:
        """Load a run configuration from a path or from an experiment id."""
        run_file = Path(path)
        if not run_file.exists():
            run_file = self.experiments_dir / f"{path}.yaml"
        if not run_file.exists():
            raise ConfigError(f"run config not found: {path}")
        return self.parse(run_file.read_text(), source=str(run_file))

    def parse(self, text: str, source: str = "<string>") -> RunConfig:
        # Substitution happens on the raw text so YAML line numbers stay valid.
        text = self._substitute_env_vars(text)
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"{source}: invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: a run config must be a mapping", line=1)

        try:
            config = RunConfig(**data)
        except ValidationError as exc:
            error = exc.errors()[0]
            loc = [str(p) if not isinstance(p, int) else p for p in error["loc"]]
            line, key = _node_line(root, loc)
            dotted = ".".join(str(p) for p in loc) or "config"
            message = error["msg"]
            if error["type"] == "extra_forbidden":
                message = f"unknown key '{loc[-1]}'"
            raise ConfigError(f"{dotted}: {message}", key=key or dotted, line=line) from exc

        logger.info("Run config loaded", source=source, name=config.name, hash=config.config_hash()[:12])
        return config

    def list_experiments(self) -> List[str]:
        """List all available experiment ids."""
        return sorted(f.stem for f in self.experiments_dir.glob("*.yaml"))

    def _substitute_env_vars(self, text: str) -> str:
        """Replace ``${VAR}`` with its environment value; unset variables are left as is."""
        return _ENV_PATTERN.sub(lambda m: os.getenv(m.group(1), m.group(0)), text)


def dump_config(config: RunConfig) -> str:
    """YAML text that parses back to an identical config."""
    return yaml.safe_dump(config.model_dump(mode="json", exclude_none=True), sort_keys=False)


# Global config loader instance
config_loader = ConfigLoader()
