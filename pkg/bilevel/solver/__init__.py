"""
Inner and nudged-phase minimization.
"""

from .inner import (
    InnerSolveReport,
    SolverConfig,
    SolverMethod,
    default_step_size,
    minimize_augmented,
    minimize_inner,
)

__all__ = [
    "InnerSolveReport",
    "SolverConfig",
    "SolverMethod",
    "default_step_size",
    "minimize_augmented",
    "minimize_inner",
]
