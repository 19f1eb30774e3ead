"""
Error-bound experiments: injected-error sweeps, scaling fits and bound
constants.
"""

from .records import CSV_HEADER, SweepRecord, read_records, write_records
from .bounds import (
    BoundConstants,
    PerturbationReport,
    attach_bounds,
    bound_violations,
    closed_form_optimal_beta,
    eval_ep_bound,
    inject_error,
    optimal_beta_bound,
    perturbation_bound,
    perturbation_trials,
)
from .sweeps import (
    BetaSummary,
    ScalingResult,
    ep_two_point,
    run_beta_sweep,
    run_delta_scaling,
    solve_reference,
    summarize_by_beta,
)
from .constants import estimate_constants, fit_truncation_constant

__all__ = [
    "CSV_HEADER",
    "SweepRecord",
    "read_records",
    "write_records",
    "BoundConstants",
    "PerturbationReport",
    "attach_bounds",
    "bound_violations",
    "closed_form_optimal_beta",
    "eval_ep_bound",
    "inject_error",
    "optimal_beta_bound",
    "perturbation_bound",
    "perturbation_trials",
    "BetaSummary",
    "ScalingResult",
    "ep_two_point",
    "run_beta_sweep",
    "run_delta_scaling",
    "solve_reference",
    "summarize_by_beta",
    "estimate_constants",
    "fit_truncation_constant",
]
