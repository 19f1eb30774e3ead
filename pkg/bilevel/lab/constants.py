"""
Empirical estimation of the bound constants around an inner solution.
"""

from __future__ import annotations
import logging
from typing import Optional, Sequence

import numpy as np

from ..core.linalg import as_vec, materialize, ritz_extremes
from ..errors import DenseCapExceeded, RegionTooSmall
from ..problems.base import BilevelProblem
from ..solver.inner import minimize_inner
from .bounds import BoundConstants
from .records import SweepRecord
from .sweeps import EXACT_SOLVER, run_beta_sweep

logger = logging.getLogger(__name__)

MIN_PAIRS = 10
FLOOR = 1e-12
DEFAULT_FIT_BETAS = np.logspace(-4, 0, 9)


def _quotient(a, b, step: float) -> float:
    return float(np.linalg.norm(a - b)) / step


def fit_truncation_constant(records: Sequence[SweepRecord], B_in: float, B_out: float) -> float:
    """
    Smallest C such that the bound dominates every successful record:

        C >= (err - B_in (delta + delta') / beta - B_out delta') (1 + beta) / beta
    """
    c = FLOOR
    for r in records:
        if not r.ok or r.beta is None or not r.beta > 0:
            continue
        residual = r.grad_error - B_in * (r.delta + r.delta_prime) / r.beta - B_out * r.delta_prime
        c = max(c, residual * (1.0 + r.beta) / r.beta)
    return c


def estimate_constants(
    problem: BilevelProblem,
    theta,
    radius: float,
    n_pairs: int = 50,
    seed: int = 0,
    records: Optional[Sequence[SweepRecord]] = None,
    phi_center=None,
    fit_betas: Sequence[float] = DEFAULT_FIT_BETAS,
) -> BoundConstants:
    """
    Estimate the bound constants in a ball around phi*_theta.

    mu and L are the extreme Ritz values of the inner Hessian at the center.
    B_in, B_out, rho and sigma are the largest Lipschitz quotients seen over
    n_pairs random point pairs in the ball; B_in is also at least the spectral
    norm of the cross derivative at the center. C is fitted to `records`, or
    to a zero-error beta sweep when none are given. Every constant is floored
    at 1e-12.

    Args:
        problem: Strongly convex bilevel problem
        theta: Outer parameters
        radius: Radius of the sampling ball
        n_pairs: Number of sampled point pairs (>= 10)
        seed: Sampling seed
        records: Sweep records to fit C against
        phi_center: Ball center; None solves for phi*_theta
        fit_betas: Betas of the zero-error sweep used when records is None

    Raises:
        RegionTooSmall: n_pairs < 10 or radius <= 0
    """
    if n_pairs < MIN_PAIRS:
        raise RegionTooSmall(f"Need at least {MIN_PAIRS} sample pairs, got {n_pairs}")
    if not radius > 0:
        raise RegionTooSmall(f"Sampling radius must be > 0, got {radius}")
    n_phi, n_theta = problem.dims()
    theta = as_vec(theta, n_theta, "theta")
    if phi_center is None:
        center = minimize_inner(problem, theta, np.zeros(n_phi), EXACT_SOLVER).phi_hat
    else:
        center = as_vec(phi_center, n_phi, "phi_center")

    mu, L = ritz_extremes(lambda v: problem.hvp_inner(center, theta, v), n_phi, iters=100, seed=seed)
    if mu <= 0:
        logger.warning(f"Smallest inner curvature {mu:.3e} is not positive; problem is not strongly convex here")

    rng = np.random.default_rng(seed)
    b_in = b_out = rho = sigma = 0.0
    for _ in range(n_pairs):
        u = rng.standard_normal((2, n_phi))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        a = center + radius * rng.uniform() * u[0]
        b = center + radius * rng.uniform() * u[1]
        step = float(np.linalg.norm(a - b))
        if step == 0.0:
            continue
        v = rng.standard_normal(n_phi)
        v /= np.linalg.norm(v)
        b_in = max(b_in, _quotient(problem.grad_theta_inner(a, theta), problem.grad_theta_inner(b, theta), step))
        b_out = max(b_out, _quotient(problem.grad_theta_outer(a, theta), problem.grad_theta_outer(b, theta), step))
        rho = max(rho, _quotient(problem.hvp_inner(a, theta, v), problem.hvp_inner(b, theta, v), step))
        sigma = max(
            sigma, _quotient(problem.cross_vjp_inner(a, theta, v), problem.cross_vjp_inner(b, theta, v), step)
        )

    try:
        cross = materialize(lambda v: problem.cross_vjp_inner(center, theta, v), n_phi)
        b_in = max(b_in, float(np.linalg.norm(cross, 2)))
    except DenseCapExceeded:
        logger.debug("Skipping cross-derivative norm above the dense cap")

    b_in, b_out = max(b_in, FLOOR), max(b_out, FLOOR)
    if records is None:
        records = run_beta_sweep(problem, theta, fit_betas, 0.0, 0.0, seeds=[seed])
    c = fit_truncation_constant(records, b_in, b_out)

    constants = BoundConstants(
        B_in=b_in,
        B_out=b_out,
        C=c,
        mu=max(mu, FLOOR),
        rho=max(rho, FLOOR),
        L=max(L, FLOOR),
        sigma=max(sigma, FLOOR),
    )
    logger.info(f"Estimated bound constants: {constants}")
    return constants
