"""
Gradient-based minimization of the inner and augmented losses.

The augmented loss is L(phi, theta, beta) = L_in + beta * L_out; beta = 0
is plain inner minimization. Both the free phase and every nudged phase of
equilibrium propagation run through minimize_augmented.
"""

from __future__ import annotations
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..core.linalg import Vec, as_vec, ritz_extremes
from ..errors import (
    ConfigError,
    Diverged,
    NegativeBetaNotEnabled,
    NonPositiveValue,
    UnknownField,
)
from ..problems.base import BilevelProblem

logger = logging.getLogger(__name__)

# Lanczos steps used to pick the default 1/L step size.
STEP_SIZE_ITERS = 30


class SolverMethod(Enum):
    """Inner optimizer."""
    GD = "gd"
    HEAVY_BALL = "heavy_ball"


@dataclass(frozen=True)
class SolverConfig:
    """
    Inner solver settings.

    Attributes:
        method: gd or heavy_ball
        step_size: Learning rate; None picks 1/L from the curvature at phi_0
        momentum: Heavy-ball coefficient in [0, 1); ignored by gd
        grad_tol: Stop once the gradient norm is at or below this
        max_iters: Maximum number of updates
        record_trace: Keep the loss at every iterate
    """
    method: str = "gd"
    step_size: Optional[float] = None
    momentum: float = 0.0
    grad_tol: float = 1e-10
    max_iters: int = 10000
    record_trace: bool = False

    def __post_init__(self):
        try:
            SolverMethod(self.method)
        except ValueError:
            raise ConfigError(
                f"Unknown solver method '{self.method}' (expected gd or heavy_ball)"
            ) from None
        if self.step_size is not None and not self.step_size > 0:
            raise NonPositiveValue(f"solver.step_size must be > 0, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"solver.momentum must be in [0, 1), got {self.momentum}")
        if not self.grad_tol > 0:
            raise NonPositiveValue(f"solver.grad_tol must be > 0, got {self.grad_tol}")
        if int(self.max_iters) < 1:
            raise NonPositiveValue(f"solver.max_iters must be >= 1, got {self.max_iters}")

    @property
    def kind(self) -> SolverMethod:
        return SolverMethod(self.method)

    def replace(self, **changes) -> SolverConfig:
        data = self.to_dict()
        data.update(changes)
        return SolverConfig(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "solver") -> SolverConfig:
        UnknownField.check(cls, data, prefix)
        return cls(**data)


@dataclass
class InnerSolveReport:
    """Outcome of one inner minimization."""
    phi_hat: Vec
    iters: int
    final_grad_norm: float
    converged: bool
    step_size: float
    beta: float = 0.0
    loss_trace: Optional[list[float]] = field(default=None, repr=False)

    def delta_bound(self, mu: float) -> float:
        """Distance-to-minimizer bound ||grad|| / mu under mu-strong convexity."""
        if not mu > 0:
            raise NonPositiveValue(f"mu must be > 0, got {mu}")
        return self.final_grad_norm / mu

    def to_dict(self) -> dict:
        return {
            "phi_hat": [float(x) for x in self.phi_hat],
            "iters": self.iters,
            "final_grad_norm": self.final_grad_norm,
            "converged": self.converged,
            "step_size": self.step_size,
            "beta": self.beta,
            "loss_trace": self.loss_trace,
        }


def default_step_size(problem: BilevelProblem, theta: Vec, beta: float, phi0: Vec) -> float:
    """
    1/L, with L the problem's curvature bound when it has one, else the
    largest-magnitude Ritz value of the augmented Hessian at phi0.
    """
    bound = problem.curvature_bound(phi0, theta, beta)
    if bound is not None and bound > 0:
        logger.debug(f"Step size from curvature bound {bound:.4g}")
        return 1.0 / bound
    n_phi = problem.dims()[0]
    lo, hi = ritz_extremes(
        lambda v: problem.hvp_augmented(phi0, theta, beta, v), n_phi, iters=STEP_SIZE_ITERS
    )
    curvature = max(abs(lo), abs(hi))
    if curvature <= 1e-12:
        logger.warning("Augmented Hessian is numerically zero; using step size 1.0")
        return 1.0
    return 1.0 / curvature


def minimize_augmented(
    problem: BilevelProblem,
    theta,
    beta: float,
    phi0,
    cfg: SolverConfig,
    allow_negative_beta: bool = False,
) -> InnerSolveReport:
    """
    Minimize L_in + beta * L_out over phi.

    Args:
        problem: Bilevel problem
        theta: Outer parameters (held fixed)
        beta: Nudging strength
        phi0: Starting point
        cfg: Solver settings
        allow_negative_beta: Opt in to beta < 0

    Returns:
        InnerSolveReport

    Raises:
        NegativeBetaNotEnabled: beta < 0 without opt-in
        Diverged: Loss or gradient became non-finite
    """
    beta = float(beta)
    if beta < 0 and not allow_negative_beta:
        raise NegativeBetaNotEnabled(
            f"beta={beta:g} < 0 requires allow_negative_beta=True"
        )
    n_phi, n_theta = problem.dims()
    theta = as_vec(theta, n_theta, "theta")
    phi = as_vec(phi0, n_phi, "phi0").copy()

    lr = cfg.step_size if cfg.step_size is not None else default_step_size(problem, theta, beta, phi)
    heavy_ball = cfg.kind is SolverMethod.HEAVY_BALL
    velocity = np.zeros_like(phi)
    trace: Optional[list[float]] = [] if cfg.record_trace else None

    iters = 0
    converged = False
    grad_norm = float("inf")
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            loss = problem.augmented_loss(phi, theta, beta)
            grad = problem.grad_phi_augmented(phi, theta, beta)
            grad_norm = float(np.linalg.norm(grad))
            if not (np.isfinite(loss) and np.isfinite(grad_norm)):
                raise Diverged(
                    f"Inner solve diverged after {iters} iterations (beta={beta:g})",
                    iters=iters,
                )
            if trace is not None:
                trace.append(float(loss))
            if grad_norm <= cfg.grad_tol:
                converged = True
                break
            if iters >= cfg.max_iters:
                break
            if heavy_ball:
                velocity = cfg.momentum * velocity - lr * grad
                phi = phi + velocity
            else:
                phi = phi - lr * grad
            iters += 1

    if converged:
        logger.debug(f"Inner solve converged in {iters} iterations (beta={beta:g}, |g|={grad_norm:.2e})")
    else:
        logger.warning(
            f"Inner solve hit max_iters={cfg.max_iters} with |g|={grad_norm:.3e} "
            f"> tol={cfg.grad_tol:.1e} (beta={beta:g})"
        )
    return InnerSolveReport(
        phi_hat=phi,
        iters=iters,
        final_grad_norm=grad_norm,
        converged=converged,
        step_size=lr,
        beta=beta,
        loss_trace=trace,
    )


def minimize_inner(problem: BilevelProblem, theta, phi0, cfg: SolverConfig) -> InnerSolveReport:
    """Minimize L_in over phi; same contract as minimize_augmented at beta = 0."""
    return minimize_augmented(problem, theta, 0.0, phi0, cfg)
