"""
Finite-difference self-check of a problem's analytic derivatives.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field

import numpy as np

from ..core.finite_diff import central_diff_grad, central_diff_jacobian
from ..core.linalg import Vec, as_vec
from ..errors import NonPositiveValue
from .base import BilevelProblem

logger = logging.getLogger(__name__)

DERIVATIVES = (
    "grad_phi_inner",
    "grad_theta_inner",
    "grad_phi_outer",
    "grad_theta_outer",
    "hvp_inner",
    "cross_vjp_inner",
    "hvp_outer",
)


def relative_error(analytic, numeric) -> float:
    """||a - f|| / max(||a||, ||f||, 1)."""
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(f)), 1.0)
    return float(np.linalg.norm(a - f)) / scale


@dataclass
class GradientCheckReport:
    """Worst relative error per derivative capability."""
    problem: str
    h: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst_name(self) -> str:
        if not self.errors:
            return ""
        return max(self.errors, key=self.errors.get)

    def passed(self, tol: float) -> bool:
        return self.worst <= tol

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "h": self.h,
            "errors": dict(self.errors),
            "worst": self.worst,
        }

    def __repr__(self) -> str:
        return f"<GradientCheckReport {self.problem} worst={self.worst:.2e} ({self.worst_name})>"


def check_gradients(
    problem: BilevelProblem,
    phi,
    theta,
    h: float = 1e-5,
    probes: int = 3,
    seed: int = 0,
) -> GradientCheckReport:
    """
    Compare analytic derivatives against central differences.

    First derivatives are compared with central differences of the losses.
    hvp_inner, hvp_outer and cross_vjp_inner are compared, on seeded random
    probe vectors, with central-difference Jacobians of the phi-gradients.

    Args:
        problem: Problem under test
        phi: Inner point
        theta: Outer point
        h: Difference step
        probes: Random probe vectors per product check
        seed: Probe seed

    Raises:
        NonPositiveValue: h <= 0
        NonFiniteEval: A loss or gradient evaluated to NaN/Inf
    """
    if not h > 0:
        raise NonPositiveValue(f"Step h must be > 0, got {h}")
    n_phi, n_theta = problem.dims()
    phi = as_vec(phi, n_phi, "phi")
    theta = as_vec(theta, n_theta, "theta")
    report = GradientCheckReport(problem=problem.name, h=h)
    errs = report.errors

    errs["grad_phi_inner"] = relative_error(
        problem.grad_phi_inner(phi, theta),
        central_diff_grad(lambda p: problem.inner_loss(p, theta), phi, h),
    )
    errs["grad_theta_inner"] = relative_error(
        problem.grad_theta_inner(phi, theta),
        central_diff_grad(lambda t: problem.inner_loss(phi, t), theta, h),
    )
    errs["grad_phi_outer"] = relative_error(
        problem.grad_phi_outer(phi, theta),
        central_diff_grad(lambda p: problem.outer_loss(p, theta), phi, h),
    )
    errs["grad_theta_outer"] = relative_error(
        problem.grad_theta_outer(phi, theta),
        central_diff_grad(lambda t: problem.outer_loss(phi, t), theta, h),
    )

    j_inner = central_diff_jacobian(lambda p: problem.grad_phi_inner(p, theta), phi, h)
    j_outer = central_diff_jacobian(lambda p: problem.grad_phi_outer(p, theta), phi, h)
    j_cross = central_diff_jacobian(lambda t: problem.grad_phi_inner(phi, t), theta, h)

    rng = np.random.default_rng(seed)
    for name in ("hvp_inner", "cross_vjp_inner", "hvp_outer"):
        errs[name] = 0.0
    for _ in range(probes):
        v = rng.standard_normal(n_phi)
        errs["hvp_inner"] = max(
            errs["hvp_inner"], relative_error(problem.hvp_inner(phi, theta, v), j_inner @ v)
        )
        errs["hvp_outer"] = max(
            errs["hvp_outer"], relative_error(problem.hvp_outer(phi, theta, v), j_outer @ v)
        )
        errs["cross_vjp_inner"] = max(
            errs["cross_vjp_inner"],
            relative_error(problem.cross_vjp_inner(phi, theta, v), j_cross.T @ v),
        )

    logger.info(f"Gradient check on {problem.name}: worst {report.worst:.3e} ({report.worst_name})")
    return report
