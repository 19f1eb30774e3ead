"""
Equilibrium propagation.

The outer gradient is the beta-derivative of d_theta L(phi*_beta, theta, beta)
at beta = 0, taken by a finite-difference stencil over nudged equilibria:

    grad ~= (1/beta) * sum_i alpha_i * d_theta L(phi_hat_{i beta}, theta, i beta)

Nudged phases are solved in order of increasing |i|. With warm starts each
phase begins at the equilibrium of the adjacent node nearer zero.
"""

from __future__ import annotations
import logging

import numpy as np

from ..core.linalg import Vec, as_vec
from ..core.stencil import FDStencil
from ..errors import Diverged, NegativeBetaNotEnabled, NonPositiveBeta, PhaseDiverged
from ..problems.base import BilevelProblem
from ..solver.inner import SolverConfig, minimize_augmented
from .models import HypergradEstimate, Method, PiVector

logger = logging.getLogger(__name__)


def node_order(nodes: tuple[int, ...]) -> list[int]:
    """Stencil nodes sorted by |i|, negative before positive on ties."""
    return sorted(nodes, key=lambda i: (abs(i), i))


def ep_estimate(
    problem: BilevelProblem,
    theta,
    phi_hat0,
    stencil: FDStencil,
    solver: SolverConfig,
    allow_negative_beta: bool = False,
    warm_start: bool = True,
) -> HypergradEstimate:
    """
    Equilibrium-propagation outer gradient.

    Node 0 reuses phi_hat0; every non-zero node costs one augmented solve.
    Step-size calibration inside those solves is not counted in hvp_count.

    Args:
        problem: Bilevel problem
        theta: Outer parameters
        phi_hat0: Free-phase equilibrium (approximate inner minimizer)
        stencil: Stencil with its step attached
        solver: Settings for the nudged phases
        allow_negative_beta: Permit negative nodes (symmetric stencils)
        warm_start: Chain phases; False starts each phase at the zero vector

    Raises:
        NonPositiveBeta: Stencil step missing or not positive
        NegativeBetaNotEnabled: Negative nodes without opt-in
        PhaseDiverged: A nudged phase diverged
    """
    n_phi, n_theta = problem.dims()
    theta = as_vec(theta, n_theta, "theta")
    phi_hat0 = as_vec(phi_hat0, n_phi, "phi_hat0")
    beta = stencil.step
    if beta is None or not beta > 0:
        raise NonPositiveBeta(f"Stencil step must be set and > 0, got {beta}")
    if min(stencil.nodes) < 0 and not allow_negative_beta:
        raise NegativeBetaNotEnabled(
            f"{stencil.kind.value} stencil has negative nodes; set allow_negative_beta"
        )

    equilibria: dict[int, Vec] = {0: phi_hat0}
    node_iters: dict[int, int] = {}
    phase2_iters = 0
    for node in node_order(stencil.nodes):
        if node == 0:
            continue
        node_beta = node * beta
        if warm_start:
            start = equilibria[node - int(np.sign(node))]
        else:
            start = np.zeros(n_phi)
        try:
            report = minimize_augmented(
                problem, theta, node_beta, start, solver, allow_negative_beta=allow_negative_beta
            )
        except Diverged as e:
            raise PhaseDiverged(node, node_beta, e) from e
        equilibria[node] = report.phi_hat
        node_iters[node] = report.iters
        phase2_iters += report.iters

    grad = np.zeros(n_theta)
    for node, coeff in zip(stencil.nodes, stencil.coefficients):
        if coeff == 0.0:
            continue
        grad += coeff * problem.grad_theta_augmented(equilibria[node], theta, node * beta)
    grad /= beta

    pi = None
    if 1 in equilibria:
        pi = ep_pi_recover(problem, theta, phi_hat0, equilibria[1], beta).pi

    free_grad_norm = float(np.linalg.norm(problem.grad_phi_inner(phi_hat0, theta)))
    logger.debug(
        f"EP {stencil!r}: {len(node_iters)} nudged phases, {phase2_iters} solver steps"
    )
    return HypergradEstimate(
        grad=grad,
        method=Method.EP,
        phase2_iters=phase2_iters,
        hvp_count=0,
        inner_solve_count=len(node_iters),
        beta=beta,
        pi=pi,
        diagnostics={
            "points": stencil.points,
            "kind": stencil.kind.value,
            "warm_start": warm_start,
            "free_grad_norm": free_grad_norm,
            "node_iters": {str(k): v for k, v in sorted(node_iters.items())},
        },
    )


def ep_pi_recover(problem: BilevelProblem, theta, phi_hat0, phi_hat_beta, beta: float) -> PiVector:
    """
    (phi_hat0 - phi_hat_beta) / beta.

    This estimates -d_beta phi*_beta at beta = 0, which equals the solution
    pi of H pi = d_phi L_out.

    Raises:
        DimMismatch: Vectors do not have length |phi|
        NonPositiveBeta: beta <= 0
    """
    if not beta > 0:
        raise NonPositiveBeta(f"beta must be > 0, got {beta}")
    n_phi = problem.dims()[0]
    phi0 = as_vec(phi_hat0, n_phi, "phi_hat0")
    phib = as_vec(phi_hat_beta, n_phi, "phi_hat_beta")
    return PiVector((phi0 - phib) / beta)
