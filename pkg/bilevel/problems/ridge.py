"""
Ridge-regression hyperparameter optimization.

    L_in(phi, theta)  = 1/2 ||X_tr phi - y_tr||^2 / m + 1/2 sum_j exp(theta_j) phi_j^2
    L_out(phi, theta) = 1/2 ||X_val phi - y_val||^2 / m_val

theta is log(lambda), either one scalar shared by every coordinate or one
value per coordinate.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..core.linalg import Vec, solve_spd
from ..errors import DimMismatch
from .base import BilevelProblem
from .data import Dataset, make_regression

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RidgeHyperopt(BilevelProblem):
    """L2-regularized least squares with a learned log-penalty."""
    train: Dataset
    val: Dataset
    per_coordinate: bool = False
    name: str = "ridge"

    def __post_init__(self):
        if self.train.n_features != self.val.n_features:
            raise DimMismatch(
                f"Train has {self.train.n_features} features, val has {self.val.n_features}"
            )

    @classmethod
    def synthetic(
        cls,
        seed: int = 0,
        n_train: int = 60,
        n_val: int = 40,
        n_features: int = 10,
        noise: float = 0.1,
        weight_scale: float = 0.05,
        target: str = "linear",
        per_coordinate: bool = False,
    ) -> RidgeHyperopt:
        train, val, _ = make_regression(
            n_train, n_val, n_features, seed,
            noise=noise, weight_scale=weight_scale, target=target,
        )
        return cls(train=train, val=val, per_coordinate=per_coordinate)

    def dims(self) -> tuple[int, int]:
        d = self.train.n_features
        return d, (d if self.per_coordinate else 1)

    def penalty(self, theta) -> Vec:
        """exp(theta) broadcast to one weight per coordinate."""
        lam = np.exp(np.asarray(theta, dtype=np.float64))
        return np.broadcast_to(lam, (self.train.n_features,))

    def inner_loss(self, phi, theta) -> float:
        return self.train.mse(phi) + 0.5 * float(self.penalty(theta) @ (phi * phi))

    def outer_loss(self, phi, theta) -> float:
        return self.val.mse(phi)

    def grad_phi_inner(self, phi, theta) -> Vec:
        return self.train.mse_grad(phi) + self.penalty(theta) * phi

    def grad_theta_inner(self, phi, theta) -> Vec:
        terms = 0.5 * self.penalty(theta) * phi * phi
        if self.per_coordinate:
            return terms
        return np.array([terms.sum()])

    def grad_phi_outer(self, phi, theta) -> Vec:
        return self.val.mse_grad(phi)

    def grad_theta_outer(self, phi, theta) -> Vec:
        return np.zeros(self.dims()[1])

    def hvp_inner(self, phi, theta, v) -> Vec:
        return self.train.mse_hvp(v) + self.penalty(theta) * v

    def hvp_outer(self, phi, theta, v) -> Vec:
        return self.val.mse_hvp(v)

    def cross_vjp_inner(self, phi, theta, v) -> Vec:
        terms = self.penalty(theta) * v * phi
        if self.per_coordinate:
            return terms
        return np.array([terms.sum()])

    def inner_hessian(self, theta) -> np.ndarray:
        X = self.train.X
        return X.T @ X / self.train.size + np.diag(self.penalty(theta))

    def solve_inner_exact(self, theta) -> Vec:
        """Normal-equations inner solution (X'X/m + diag(exp theta)) phi = X'y/m."""
        rhs = self.train.X.T @ self.train.y / self.train.size
        return solve_spd(self.inner_hessian(theta), rhs)


@dataclass
class GridSearchResult:
    """Outcome of a log-lambda grid search."""
    best_theta: float
    best_loss: float
    grid: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best_theta": self.best_theta,
            "best_loss": self.best_loss,
            "grid": list(self.grid),
            "losses": list(self.losses),
        }


def ridge_grid_search(problem: RidgeHyperopt, grid: Iterable[float]) -> GridSearchResult:
    """
    Evaluate the validation loss at each scalar log-lambda of `grid`.

    The inner problem is solved exactly at each point. Per-coordinate
    problems use the same value on every coordinate.
    """
    values = [float(g) for g in grid]
    if not values:
        raise DimMismatch("Grid search needs at least one grid point")
    n_theta = problem.dims()[1]
    losses = []
    for g in values:
        theta = np.full(n_theta, g)
        phi = problem.solve_inner_exact(theta)
        losses.append(problem.outer_loss(phi, theta))
    best = int(np.argmin(losses))
    logger.info(
        f"Ridge grid search over {len(values)} points: best log-lambda "
        f"{values[best]:.4f}, validation loss {losses[best]:.6g}"
    )
    return GridSearchResult(
        best_theta=values[best], best_loss=losses[best], grid=values, losses=losses
    )
