"""
bilevel - Hypergradient estimators for bilevel optimization.

Estimators:
- oracle: exact dense solve (small problems only)
- first_order / identity: cheap biased approximations
- rbp: truncated Neumann series
- cg: conjugate gradient on the inner Hessian
- ep: equilibrium propagation with finite-difference stencils in beta

Experiments (bilevel.lab) sweep the nudging strength and injected inner
errors and compare measured gradient errors against the analytic bounds.
"""

__version__ = "0.1.0"

from .errors import BilevelError, ConfigError, NumericalError
from .config import ConfigLoader, RunConfig
from .estimators import EstimatorSpec, HypergradEstimate, estimate_hypergradient
from .problems import BilevelProblem, TaskFamily, build_problem
from .solver import SolverConfig, minimize_inner
from .training import TrajectoryLog, run_bilevel

__all__ = [
    "BilevelError",
    "ConfigError",
    "NumericalError",
    "ConfigLoader",
    "RunConfig",
    "EstimatorSpec",
    "HypergradEstimate",
    "estimate_hypergradient",
    "BilevelProblem",
    "TaskFamily",
    "build_problem",
    "SolverConfig",
    "minimize_inner",
    "TrajectoryLog",
    "run_bilevel",
]
