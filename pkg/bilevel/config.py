"""
Run configuration for bilevel experiments.

One JSON (or YAML) file describes a run. Loading is strict: unknown keys
raise UnknownField with the dotted path of the key, and every value is
validated before any compute starts. to_dict() materializes all defaults so
result files can embed the full configuration.
"""

from __future__ import annotations
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import BilevelError, ConfigError, NonPositiveValue, UnknownField
from .estimators.models import EstimatorSpec
from .lab.sweeps import SCALING_METHODS
from .problems.registry import resolve_params
from .solver.inner import SolverConfig

logger = logging.getLogger(__name__)

YAML_SUFFIXES = (".yaml", ".yml")


def _grid(start: float, stop: float, num: int) -> list[float]:
    return [float(x) for x in np.logspace(start, stop, num)]


def _coerce(value, path: str, cast=float):
    """cast(value), with failures reported as ConfigError naming path."""
    kind = "an integer" if cast is int else "a number"
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{path} must be {kind}, got {value!r}")
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path} must be {kind}, got {value!r}") from None


def _floats(values, path: str, positive: bool = True) -> list[float]:
    if isinstance(values, (str, bytes)) or not hasattr(values, "__iter__"):
        raise ConfigError(f"{path} must be a list of numbers, got {values!r}")
    out = [_coerce(v, f"{path}[{i}]") for i, v in enumerate(values)]
    if not out:
        raise ConfigError(f"{path} must not be empty")
    if positive and any(not v > 0 for v in out):
        raise NonPositiveValue(f"All values of {path} must be > 0")
    return out


@dataclass
class ProblemSpec:
    """Which problem to build: registry name, parameters and data seed."""
    name: str = "p1"
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.params, dict):
            raise ConfigError(f"problem.params must be a mapping, got {self.params!r}")
        # Fills defaults and rejects unknown names/parameters
        self.params = resolve_params(self.name, self.params)
        self.seed = _coerce(self.seed, "problem.seed", int)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "problem") -> ProblemSpec:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class OuterLoopSpec:
    """
    Outer gradient descent.

    Attributes:
        theta0: Initial outer parameters; None uses the problem's default
        outer_lr: Step size of theta <- theta - outer_lr * grad
        outer_steps: Number of outer updates
        warm_start: Start each inner solve at the previous phi_hat
        tasks_per_step: Tasks averaged per step for meta-learning problems
    """
    theta0: Optional[list[float]] = None
    outer_lr: float = 0.1
    outer_steps: int = 100
    warm_start: bool = True
    tasks_per_step: int = 1

    def __post_init__(self):
        if self.theta0 is not None:
            self.theta0 = _floats(self.theta0, "outer.theta0", positive=False)
        self.outer_lr = _coerce(self.outer_lr, "outer.outer_lr")
        self.outer_steps = _coerce(self.outer_steps, "outer.outer_steps", int)
        self.tasks_per_step = _coerce(self.tasks_per_step, "outer.tasks_per_step", int)
        if not self.outer_lr > 0:
            raise NonPositiveValue(f"outer.outer_lr must be > 0, got {self.outer_lr}")
        if self.outer_steps < 0:
            raise ConfigError(f"outer.outer_steps must be >= 0, got {self.outer_steps}")
        if self.tasks_per_step < 1:
            raise NonPositiveValue(f"outer.tasks_per_step must be >= 1, got {self.tasks_per_step}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "outer") -> OuterLoopSpec:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class SweepSpec:
    """
    Beta sweep with injected errors.

    delta_prime=None switches to the solver protocol: the nudged phase is
    solved from the perturbed free point and its error is measured.
    """
    betas: list[float] = field(default_factory=lambda: _grid(-4, 0, 25))
    delta: float = 1e-3
    delta_prime: Optional[float] = 1e-3
    seeds: int = 20
    bounds: bool = False
    radius: float = 0.1

    def __post_init__(self):
        self.betas = _floats(self.betas, "sweep.betas")
        self.delta = _coerce(self.delta, "sweep.delta")
        if self.delta_prime is not None:
            self.delta_prime = _coerce(self.delta_prime, "sweep.delta_prime")
        self.seeds = _coerce(self.seeds, "sweep.seeds", int)
        self.radius = _coerce(self.radius, "sweep.radius")
        if self.delta < 0 or (self.delta_prime is not None and self.delta_prime < 0):
            raise ConfigError("sweep.delta and sweep.delta_prime must be >= 0")
        if self.seeds < 1:
            raise NonPositiveValue(f"sweep.seeds must be >= 1, got {self.seeds}")
        if not self.radius > 0:
            raise NonPositiveValue(f"sweep.radius must be > 0, got {self.radius}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "sweep") -> SweepSpec:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class ScalingSpec:
    """Error-vs-delta experiment; betas are only used by ep_opt_beta."""
    method: str = "cg"
    deltas: list[float] = field(default_factory=lambda: _grid(-6, -2, 9))
    seeds: int = 20
    betas: list[float] = field(default_factory=lambda: _grid(-6, 0, 61))

    def __post_init__(self):
        if self.method not in SCALING_METHODS:
            raise ConfigError(
                f"scaling.method must be one of {', '.join(SCALING_METHODS)}, got '{self.method}'"
            )
        self.deltas = _floats(self.deltas, "scaling.deltas")
        self.betas = _floats(self.betas, "scaling.betas")
        self.seeds = _coerce(self.seeds, "scaling.seeds", int)
        if self.seeds < 1:
            raise NonPositiveValue(f"scaling.seeds must be >= 1, got {self.seeds}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "scaling") -> ScalingSpec:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class OutputSpec:
    dir: str = "results"

    @property
    def path(self) -> Path:
        return Path(self.dir)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "output") -> OutputSpec:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class RunConfig:
    """
    Complete description of one run.

    seed drives everything random that is not problem data: meta-task
    sampling and error-injection directions.
    """
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    outer: OuterLoopSpec = field(default_factory=OuterLoopSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    scaling: ScalingSpec = field(default_factory=ScalingSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.threads = _coerce(self.threads, "threads", int)
        self.seed = _coerce(self.seed, "seed", int)
        if self.threads < 1:
            raise NonPositiveValue(f"threads must be >= 1, got {self.threads}")

    _sections = {
        "problem": ProblemSpec,
        "solver": SolverConfig,
        "estimator": EstimatorSpec,
        "outer": OuterLoopSpec,
        "sweep": SweepSpec,
        "scaling": ScalingSpec,
        "output": OutputSpec,
    }

    def to_dict(self) -> dict:
        """Every field, defaults included."""
        data = {name: getattr(self, name).to_dict() for name in self._sections}
        data["seed"] = self.seed
        data["threads"] = self.threads
        return data

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        """
        Build from a plain mapping.

        Raises:
            UnknownField: Unknown key anywhere in the tree
            ConfigError: Invalid value
        """
        UnknownField.check(cls, data)
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            section = cls._sections.get(key)
            if section is None:
                kwargs[key] = value
            elif value is None:
                continue
            else:
                try:
                    kwargs[key] = section.from_dict(value, prefix=key)
                except BilevelError:
                    raise
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"Invalid value in '{key}': {e}") from e
        return cls(**kwargs)

    def with_seed(self, seed: int) -> RunConfig:
        """Override both the run seed and the problem data seed."""
        return replace(self, seed=int(seed), problem=replace(self.problem, seed=int(seed)))

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_yaml(self) -> str:
        return yaml.dump(self.to_dict(), default_flow_style=False, sort_keys=False)


class ConfigLoader:
    """
    Reads and writes run configurations.

    Usage:
        loader = ConfigLoader()
        cfg = loader.load("run.json")
        loader.save(cfg, "out/config.yaml")
    """

    def parse(self, text: str, suffix: str = ".json") -> dict:
        """Parse JSON or YAML text into a mapping."""
        try:
            data = yaml.safe_load(text) if suffix in YAML_SUFFIXES else json.loads(text)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Could not parse config: {e}") from e
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigError(f"Config root must be a mapping, got {type(data).__name__}")
        return data

    def load(self, path: Path | str) -> RunConfig:
        """
        Load a config file; .yaml/.yml are read as YAML, anything else as JSON.

        Raises:
            ConfigError: Missing file, parse error or invalid content
        """
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"Config file not found: {p}")
        cfg = RunConfig.from_dict(self.parse(p.read_text(), p.suffix))
        logger.debug(f"Loaded run config from {p}")
        return cfg

    def save(self, cfg: RunConfig, path: Path | str) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(cfg.to_yaml() if p.suffix in YAML_SUFFIXES else cfg.to_json() + "\n")
        logger.debug(f"Saved run config to {p}")
        return p
