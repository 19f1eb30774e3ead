"""
Bilevel problem interface and the built-in problem suite.
"""

from .base import BilevelProblem, TaskFamily
from .checks import GradientCheckReport, check_gradients, relative_error
from .data import Dataset, TargetKind, make_regression
from .meta import MetaRidge, MetaRidgeTask
from .predictive_coding import PredictiveCodingNet, forward_pass
from .quadratic import QuadraticBilevel, closed_form_solution
from .registry import PROBLEMS, build_problem, problem_defaults, resolve_params
from .ridge import GridSearchResult, RidgeHyperopt, ridge_grid_search

__all__ = [
    "BilevelProblem",
    "TaskFamily",
    "GradientCheckReport",
    "check_gradients",
    "relative_error",
    "Dataset",
    "TargetKind",
    "make_regression",
    "MetaRidge",
    "MetaRidgeTask",
    "PredictiveCodingNet",
    "forward_pass",
    "QuadraticBilevel",
    "closed_form_solution",
    "PROBLEMS",
    "build_problem",
    "problem_defaults",
    "resolve_params",
    "GridSearchResult",
    "RidgeHyperopt",
    "ridge_grid_search",
]
