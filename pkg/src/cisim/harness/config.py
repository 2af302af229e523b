"""Experiment configuration: defaults, validation, YAML files and overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..models import BUILT_IN

METHODS = ("cis", "gcis", "cis_r1", "cis_r2", "wgr1", "wgr2", "euler", "dg", "sis")
DENSITY_METHODS = ("gcis", "dg", "wgr1", "wgr2")
POLICIES = ("full", "drift_only", "frozen")
TARGETS = ("mean", "density")

DEFAULT_STATES = {
    "constant": [0.0],
    "ou": [2.0],
    "sv": [1.0, 0.0],
    "cir": [2.5, 3.0],
    "logcir": [0.9162907318741551, 1.0986122886681098],  # log(2.5), log(3)
}
DEFAULT_MODEL_PARAMS = {
    "constant": {"b0": [0.0], "sigma0": [[1.0]]},
    "ou": {"rho": 0.5, "mu": 1.0, "sigma": 0.4},
}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CISIM_WORKERS", "1")))
    except ValueError:
        raise ConfigError("CISIM_WORKERS must be an integer") from None


@dataclass
class ExperimentConfig:
    model: str = "sv"
    model_params: dict = field(default_factory=dict)
    method: str = "cis"
    x0: list | None = None  # default: the model's reference state
    x_T: list | None = None  # density target; default x0
    T: float = 1.0
    horizons: list | None = None  # overrides T with a grid
    delta: float = 1.0
    alpha: float = 0.5
    policy: str = "full"
    target: str | None = None  # "mean" or "density"; default by method
    density_coordinates: str = "native"  # "cir" reports logcir densities in CIR coordinates
    n_replicates: int = 1000
    budget: float | None = None  # cost target K; sets n_replicates from a pilot run
    pilot_replicates: int = 2000
    n_particles: int = 1000
    n_checkpoints: int = 10
    ess_threshold: float = 500.0
    m_steps: int = 16
    fixed_anchor: bool = False
    reference: float | None = None  # truth for rmse / mad
    seed: int = 0
    chunk_size: int = 4096
    workers: int = field(default_factory=default_workers)
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in BUILT_IN:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(BUILT_IN)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {list(POLICIES)}")
        if self.target is not None and self.target not in TARGETS:
            raise ConfigError(f"target must be one of {list(TARGETS)}")
        if self.method in DENSITY_METHODS and self.target == "mean":
            raise ConfigError(f"method {self.method} only estimates densities")
        if self.method in ("euler", "sis", "cis_r1", "cis_r2") and self.target == "density":
            raise ConfigError(f"method {self.method} only estimates means")
        if self.density_coordinates not in ("native", "cir"):
            raise ConfigError("density_coordinates must be 'native' or 'cir'")
        if self.density_coordinates == "cir" and self.model != "logcir":
            raise ConfigError("density_coordinates 'cir' applies to the logcir model only")
        for name in ("T", "delta"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < float(self.alpha) <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.horizons is not None and (not self.horizons or any(float(t) <= 0 for t in self.horizons)):
            raise ConfigError("horizons must be a nonempty list of positive times")
        for name in ("n_replicates", "n_particles", "n_checkpoints", "m_steps", "chunk_size", "workers",
                     "pilot_replicates"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.ess_threshold < 0:
            raise ConfigError("ess_threshold must be non-negative")
        if self.budget is not None and not self.budget > 0:
            raise ConfigError("budget must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.method == "sis" and self.model not in ("ou", "constant"):
            raise ConfigError("sis needs a closed-form transition density (models ou, constant)")

    @property
    def resolved_target(self) -> str:
        if self.target is not None:
            return self.target
        return "density" if self.method in DENSITY_METHODS else "mean"

    @property
    def resolved_x0(self) -> list:
        return list(self.x0) if self.x0 is not None else list(DEFAULT_STATES[self.model])

    @property
    def resolved_x_T(self) -> list:
        return list(self.x_T) if self.x_T is not None else self.resolved_x0

    @property
    def resolved_model_params(self) -> dict:
        return {**DEFAULT_MODEL_PARAMS.get(self.model, {}), **self.model_params}

    @property
    def horizon_grid(self) -> list[float]:
        return [float(t) for t in (self.horizons if self.horizons is not None else [self.T])]

    def resolved(self) -> dict:
        """Every field with defaults filled in, for echoing into outputs."""
        out = dataclasses.asdict(self)
        out.update(target=self.resolved_target, x0=self.resolved_x0, x_T=self.resolved_x_T,
                   model_params=self.resolved_model_params, horizons=self.horizon_grid)
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return from_mapping({**dataclasses.asdict(self), **changes})


FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def from_mapping(mapping: dict) -> ExperimentConfig:
    unknown = set(mapping) - FIELDS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**mapping)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load(path: str | Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of keys to values")
    return data


def parse_override(item: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as YAML (numbers, lists, booleans)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)
