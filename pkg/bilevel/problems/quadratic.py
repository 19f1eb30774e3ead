"""
Quadratic bilevel problems with closed-form solutions.

    L_in(phi, theta)  = 1/2 phi'H phi - phi'(B theta + c)
    L_out(phi, theta) = 1/2 ||phi - t||^2 + gamma/2 ||theta||^2
"""

from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from ..core.linalg import DenseMat, Vec, as_mat, as_vec, factor_spd
from ..errors import DimMismatch, NonPositiveValue
from .base import BilevelProblem

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadraticBilevel(BilevelProblem):
    """Quadratic inner loss with SPD Hessian H and linear coupling B."""
    H: DenseMat
    B: DenseMat
    c: Vec
    t: Vec
    gamma: float = 0.0
    name: str = "quad"

    def __post_init__(self):
        H = as_mat(self.H, "H").copy()
        B = as_mat(self.B, "B").copy()
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimMismatch(f"H must be square, got {H.shape}")
        if B.shape[0] != n:
            raise DimMismatch(f"B must have {n} rows, got {B.shape}")
        if self.gamma < 0:
            raise NonPositiveValue(f"gamma must be >= 0, got {self.gamma}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", as_vec(self.c, n, "c").copy())
        object.__setattr__(self, "t", as_vec(self.t, n, "t").copy())
        object.__setattr__(self, "gamma", float(self.gamma))
        for arr in (self.H, self.B, self.c, self.t):
            arr.setflags(write=False)

    @classmethod
    def random(
        cls,
        n_phi: int,
        n_theta: int,
        seed: int = 0,
        gamma: float = 0.0,
    ) -> QuadraticBilevel:
        """
        Seeded random instance.

        H = A A' + I with A ~ N(0, 1/n_phi), so the spectrum of H sits in
        roughly [1, 5]. B ~ N(0, 1/n_phi); c, t ~ N(0, 1/4).
        """
        if n_phi < 1 or n_theta < 1:
            raise NonPositiveValue("Quadratic instance needs n_phi, n_theta >= 1")
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n_phi, n_phi)) / np.sqrt(n_phi)
        H = a @ a.T + np.eye(n_phi)
        H = 0.5 * (H + H.T)
        B = rng.standard_normal((n_phi, n_theta)) / np.sqrt(n_phi)
        c = 0.5 * rng.standard_normal(n_phi)
        t = 0.5 * rng.standard_normal(n_phi)
        return cls(H=H, B=B, c=c, t=t, gamma=gamma)

    @classmethod
    def scalar(cls) -> QuadraticBilevel:
        """
        One-dimensional instance: L_in = 1/2 (phi - theta)^2, L_out = 1/2 phi^2.

        The composite outer objective is theta^2 / 2.
        """
        return cls(
            H=np.eye(1), B=np.eye(1), c=np.zeros(1), t=np.zeros(1), gamma=0.0, name="p1"
        )

    def dims(self) -> tuple[int, int]:
        return self.B.shape[0], self.B.shape[1]

    def inner_loss(self, phi, theta) -> float:
        return float(0.5 * phi @ (self.H @ phi) - phi @ (self.B @ theta + self.c))

    def outer_loss(self, phi, theta) -> float:
        d = phi - self.t
        return float(0.5 * d @ d + 0.5 * self.gamma * theta @ theta)

    def grad_phi_inner(self, phi, theta) -> Vec:
        return self.H @ phi - self.B @ theta - self.c

    def grad_theta_inner(self, phi, theta) -> Vec:
        return -(self.B.T @ phi)

    def grad_phi_outer(self, phi, theta) -> Vec:
        return phi - self.t

    def grad_theta_outer(self, phi, theta) -> Vec:
        return self.gamma * np.asarray(theta, dtype=np.float64)

    def hvp_inner(self, phi, theta, v) -> Vec:
        return self.H @ v

    def hvp_outer(self, phi, theta, v) -> Vec:
        return np.array(v, dtype=np.float64)

    def cross_vjp_inner(self, phi, theta, v) -> Vec:
        return -(self.B.T @ v)

    def with_target(self, t) -> QuadraticBilevel:
        """Copy with a different outer target."""
        return QuadraticBilevel(
            H=self.H, B=self.B, c=self.c, t=t, gamma=self.gamma, name=self.name
        )


def closed_form_solution(problem: QuadraticBilevel, theta) -> tuple[Vec, Vec]:
    """
    Exact inner solution and outer gradient of a quadratic instance.

        phi*  = H^-1 (B theta + c)
        grad  = gamma theta + B' H^-1 (phi* - t)

    Raises:
        NotSPD: H is not symmetric positive definite
    """
    n_phi, n_theta = problem.dims()
    theta = as_vec(theta, n_theta, "theta")
    factor = factor_spd(problem.H)
    phi_star = factor.solve(problem.B @ theta + problem.c)
    pi = factor.solve(phi_star - problem.t)
    grad = problem.grad_theta_outer(phi_star, theta) - problem.cross_vjp_inner(
        phi_star, theta, pi
    )
    return phi_star, grad
