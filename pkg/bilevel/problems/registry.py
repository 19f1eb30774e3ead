"""
Problem construction by name.

Each entry documents its parameter schema with defaults. Unknown parameters
are rejected before anything is built.
"""

from __future__ import annotations
import logging
from typing import Any, Callable, Optional, Union

from ..errors import ConfigError, UnknownField
from .base import BilevelProblem, TaskFamily
from .meta import MetaRidge
from .predictive_coding import PredictiveCodingNet
from .quadratic import QuadraticBilevel
from .ridge import RidgeHyperopt

logger = logging.getLogger(__name__)

AnyProblem = Union[BilevelProblem, TaskFamily]


def _p1(seed: int) -> QuadraticBilevel:
    return QuadraticBilevel.scalar()


def _quad(seed: int, n_phi: int, n_theta: int, gamma: float) -> QuadraticBilevel:
    return QuadraticBilevel.random(int(n_phi), int(n_theta), seed=seed, gamma=float(gamma))


def _ridge(seed: int, **params) -> RidgeHyperopt:
    return RidgeHyperopt.synthetic(seed=seed, **params)


def _meta_ridge(seed: int, **params) -> MetaRidge:
    return MetaRidge(seed=seed, **params)


def _pcn(seed: int, sizes) -> PredictiveCodingNet:
    if isinstance(sizes, (int, float, str)):
        raise ConfigError(f"pcn sizes must be a list of layer widths, got {sizes!r}")
    return PredictiveCodingNet.random(tuple(int(s) for s in sizes), seed=seed)


# name -> (factory, default parameters)
PROBLEMS: dict[str, tuple[Callable[..., AnyProblem], dict[str, Any]]] = {
    "p1": (_p1, {}),
    "quad": (_quad, {"n_phi": 5, "n_theta": 3, "gamma": 0.0}),
    "ridge": (
        _ridge,
        {
            "n_train": 60,
            "n_val": 40,
            "n_features": 10,
            "noise": 0.1,
            "weight_scale": 0.05,
            "target": "linear",
            "per_coordinate": False,
        },
    ),
    "meta_ridge": (
        _meta_ridge,
        {
            "n_features": 5,
            "n_train": 16,
            "n_val": 4,
            "noise": 0.1,
            "center_scale": 1.0,
            "spread": 0.1,
        },
    ),
    "pcn": (_pcn, {"sizes": [2, 3, 1]}),
}


def problem_defaults(name: str) -> dict[str, Any]:
    """Full parameter set of a registered problem, defaults filled in."""
    if name not in PROBLEMS:
        raise UnknownField(f"problem.name={name}", list(PROBLEMS))
    return {k: (list(v) if isinstance(v, list) else v) for k, v in PROBLEMS[name][1].items()}


def resolve_params(name: str, params: Optional[dict] = None) -> dict[str, Any]:
    """Merge user parameters over the defaults, rejecting unknown keys."""
    resolved = problem_defaults(name)
    for key, value in (params or {}).items():
        if key not in resolved:
            raise UnknownField(f"problem.params.{key}", list(resolved))
        resolved[key] = value
    return resolved


def build_problem(name: str, params: Optional[dict] = None, seed: int = 0) -> AnyProblem:
    """
    Build a suite problem.

    Args:
        name: One of p1, quad, ridge, meta_ridge, pcn
        params: Problem parameters (see PROBLEMS for the schema)
        seed: Seed of all random problem data

    Returns:
        A BilevelProblem, or a TaskFamily for meta-learning problems

    Raises:
        UnknownField: Unknown problem name or parameter
        ConfigError: Invalid parameter values
    """
    resolved = resolve_params(name, params)
    factory = PROBLEMS[name][0]
    try:
        problem = factory(int(seed), **resolved)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid parameters for problem '{name}': {e}") from e
    logger.info(f"Built problem {problem!r} (seed {seed})")
    return problem
