"""
Implicit-differentiation estimators.

All of them approximate pi solving H pi = d_phi L_out, with H the inner
Hessian at (phi_hat, theta), and then assemble

    grad = d_theta L_out - pi' d_theta d_phi L_in

Only Hessian-vector products are used, except by the dense oracle.
"""

from __future__ import annotations
import logging
from typing import Optional

import numpy as np

from ..core.linalg import Vec, as_vec, materialize, ritz_extremes, solve_spd
from ..errors import Diverged, IndefiniteDetected, NonPositiveValue
from ..problems.base import BilevelProblem
from .models import HypergradEstimate, Method, PiVector

logger = logging.getLogger(__name__)

# RBP gives up once ||pi|| exceeds this.
PI_NORM_CAP = 1e12


def _checked(problem: BilevelProblem, phi_hat, theta) -> tuple[Vec, Vec]:
    n_phi, n_theta = problem.dims()
    return as_vec(phi_hat, n_phi, "phi_hat"), as_vec(theta, n_theta, "theta")


def assemble_gradient(problem: BilevelProblem, phi_hat, theta, pi: PiVector | Vec) -> Vec:
    """
    d_theta L_out(phi_hat, theta) - cross_vjp_inner(phi_hat, theta, pi).

    Raises:
        DimMismatch: pi does not have length |phi|
    """
    phi_hat, theta = _checked(problem, phi_hat, theta)
    vec = pi.pi if isinstance(pi, PiVector) else pi
    vec = as_vec(vec, phi_hat.shape[0], "pi")
    return problem.grad_theta_outer(phi_hat, theta) - problem.cross_vjp_inner(phi_hat, theta, vec)


def oracle_exact(problem: BilevelProblem, phi_hat, theta) -> HypergradEstimate:
    """
    Dense implicit-function-theorem gradient.

    H is assembled from |phi| Hessian-vector products on basis vectors and
    factored by Cholesky.

    Raises:
        DenseCapExceeded: |phi| above the dense cap
        NotSPD: Hessian at phi_hat is asymmetric or not positive definite
    """
    phi_hat, theta = _checked(problem, phi_hat, theta)
    n_phi = phi_hat.shape[0]
    # Asymmetry beyond round-off surfaces as NotSPD from solve_spd
    hessian = materialize(lambda v: problem.hvp_inner(phi_hat, theta, v), n_phi)
    g = problem.grad_phi_outer(phi_hat, theta)
    pi = solve_spd(hessian, g)
    grad = assemble_gradient(problem, phi_hat, theta, pi)
    logger.debug(f"Oracle gradient from dense {n_phi}x{n_phi} Hessian")
    return HypergradEstimate(
        grad=grad,
        method=Method.ORACLE,
        hvp_count=n_phi,
        residual=float(np.linalg.norm(hessian @ pi - g)),
        pi=pi,
    )


def first_order(problem: BilevelProblem, phi_hat, theta) -> HypergradEstimate:
    """Direct derivative d_theta L_out only (pi = 0)."""
    phi_hat, theta = _checked(problem, phi_hat, theta)
    return HypergradEstimate(
        grad=np.array(problem.grad_theta_outer(phi_hat, theta), dtype=np.float64),
        method=Method.FIRST_ORDER,
        pi=np.zeros_like(phi_hat),
    )


def one_step_identity(problem: BilevelProblem, phi_hat, theta) -> HypergradEstimate:
    """Hessian replaced by the identity: pi = d_phi L_out."""
    phi_hat, theta = _checked(problem, phi_hat, theta)
    pi = problem.grad_phi_outer(phi_hat, theta)
    return HypergradEstimate(
        grad=assemble_gradient(problem, phi_hat, theta, pi),
        method=Method.IDENTITY,
        pi=pi,
    )


def inverse_curvature(problem: BilevelProblem, phi_hat: Vec, theta: Vec, iters: int = 30) -> float:
    """1 / (largest Ritz value of the inner Hessian)."""
    _, hi = ritz_extremes(lambda v: problem.hvp_inner(phi_hat, theta, v), phi_hat.shape[0], iters=iters)
    if not hi > 0:
        raise NonPositiveValue(f"Largest inner curvature is {hi:.3e}; cannot pick alpha = 1/L")
    return 1.0 / hi


def rbp_neumann(
    problem: BilevelProblem,
    phi_hat,
    theta,
    alpha: Optional[float] = None,
    k: int = 100,
    tol: float = 0.0,
) -> HypergradEstimate:
    """
    Recurrent backpropagation (truncated Neumann series).

    Starting from pi = 0, repeats pi <- pi - alpha (H pi - g) up to k times,
    stopping early once the update norm is at or below tol. After j steps pi
    equals alpha * sum_{i<j} (I - alpha H)^i g.

    Args:
        alpha: Step; None uses 1/L from a Lanczos estimate
        k: Maximum number of steps (0 reproduces first_order)
        tol: Update-norm tolerance

    Raises:
        Diverged: ||pi|| exceeded the cap
    """
    phi_hat, theta = _checked(problem, phi_hat, theta)
    if alpha is None:
        alpha = inverse_curvature(problem, phi_hat, theta)
    if not alpha > 0:
        raise NonPositiveValue(f"RBP step alpha must be > 0, got {alpha}")
    g = problem.grad_phi_outer(phi_hat, theta)
    pi = np.zeros_like(phi_hat)
    residual = float(np.linalg.norm(g))
    iters = 0
    for _ in range(int(k)):
        r = problem.hvp_inner(phi_hat, theta, pi) - g
        residual = float(np.linalg.norm(r))
        update = alpha * r
        pi = pi - update
        iters += 1
        pi_norm = float(np.linalg.norm(pi))
        if not np.isfinite(pi_norm) or pi_norm > PI_NORM_CAP:
            raise Diverged(
                f"RBP iterate norm {pi_norm:.3e} exceeded {PI_NORM_CAP:.0e} after {iters} steps "
                f"(alpha={alpha:.3e} too large or Hessian indefinite)",
                iters=iters,
            )
        if float(np.linalg.norm(update)) <= tol:
            break

    logger.debug(f"RBP finished after {iters} steps, residual {residual:.3e}")
    return HypergradEstimate(
        grad=assemble_gradient(problem, phi_hat, theta, pi),
        method=Method.RBP,
        phase2_iters=iters,
        hvp_count=iters,
        residual=residual,
        pi=pi,
        diagnostics={"alpha": float(alpha)},
    )


def conjugate_gradient(
    problem: BilevelProblem,
    phi_hat,
    theta,
    max_iters: int = 100,
    tol: float = 1e-10,
) -> HypergradEstimate:
    """
    Conjugate gradients on H pi = g from pi = 0.

    Stops when ||r|| <= tol * (1 + ||g||). Both the absolute and relative
    final residuals are recorded.

    Raises:
        IndefiniteDetected: p'Hp <= 0 was met
    """
    phi_hat, theta = _checked(problem, phi_hat, theta)
    g = problem.grad_phi_outer(phi_hat, theta)
    g_norm = float(np.linalg.norm(g))
    threshold = tol * (1.0 + g_norm)

    pi = np.zeros_like(phi_hat)
    r = g.copy()
    p = r.copy()
    rr = float(r @ r)
    iters = 0
    while np.sqrt(rr) > threshold and iters < max_iters:
        hp = problem.hvp_inner(phi_hat, theta, p)
        curvature = float(p @ hp)
        if curvature <= 0:
            raise IndefiniteDetected(curvature, iters)
        step = rr / curvature
        pi += step * p
        r -= step * hp
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        iters += 1

    residual = float(np.sqrt(rr))
    if residual > threshold:
        logger.warning(f"CG stopped at max_iters={max_iters} with residual {residual:.3e}")
    else:
        logger.debug(f"CG converged in {iters} iterations, residual {residual:.3e}")
    return HypergradEstimate(
        grad=assemble_gradient(problem, phi_hat, theta, pi),
        method=Method.CG,
        phase2_iters=iters,
        hvp_count=iters,
        residual=residual,
        pi=pi,
        diagnostics={"relative_residual": residual / (1.0 + g_norm)},
    )
