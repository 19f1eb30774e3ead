"""
Estimator selection from an EstimatorSpec.
"""

from __future__ import annotations
import logging

from ..problems.base import BilevelProblem
from ..solver.inner import SolverConfig
from .equilibrium import ep_estimate
from .implicit import (
    conjugate_gradient,
    first_order,
    one_step_identity,
    oracle_exact,
    rbp_neumann,
)
from .models import EstimatorSpec, HypergradEstimate, Method

logger = logging.getLogger(__name__)


def estimate_hypergradient(
    problem: BilevelProblem,
    theta,
    phi_hat,
    spec: EstimatorSpec,
    solver: SolverConfig,
) -> HypergradEstimate:
    """
    Run the estimator named by `spec.method` at (phi_hat, theta).

    `solver` is only used by equilibrium propagation for its nudged phases.
    """
    method = spec.kind
    if method is Method.ORACLE:
        estimate = oracle_exact(problem, phi_hat, theta)
    elif method is Method.FIRST_ORDER:
        estimate = first_order(problem, phi_hat, theta)
    elif method is Method.IDENTITY:
        estimate = one_step_identity(problem, phi_hat, theta)
    elif method is Method.RBP:
        estimate = rbp_neumann(
            problem, phi_hat, theta, alpha=spec.rbp.alpha, k=spec.rbp.k, tol=spec.rbp.tol
        )
    elif method is Method.CG:
        estimate = conjugate_gradient(
            problem, phi_hat, theta, max_iters=spec.cg.max_iters, tol=spec.cg.tol
        )
    else:
        estimate = ep_estimate(
            problem,
            theta,
            phi_hat,
            spec.ep.stencil(),
            solver,
            allow_negative_beta=spec.ep.allow_negative_beta,
            warm_start=spec.ep.warm_start,
        )
    logger.debug(f"Estimated {estimate}")
    return estimate
