"""
Abstract bilevel problem interface.
"""

from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ..core.linalg import Vec


class BilevelProblem(ABC):
    """
    Abstract bilevel problem.

    Bundles the inner loss L_in(phi, theta), the outer loss L_out(phi, theta)
    and the derivative actions estimators need. Estimators and solvers talk
    to this, and never see how a problem stores its data.

    Instances are immutable after construction; every capability is a pure
    function of its arguments.
    """

    name: str = "problem"

    @abstractmethod
    def dims(self) -> tuple[int, int]:
        """(|phi|, |theta|)"""
        pass

    @abstractmethod
    def inner_loss(self, phi: Vec, theta: Vec) -> float:
        pass

    @abstractmethod
    def outer_loss(self, phi: Vec, theta: Vec) -> float:
        pass

    @abstractmethod
    def grad_phi_inner(self, phi: Vec, theta: Vec) -> Vec:
        pass

    @abstractmethod
    def grad_theta_inner(self, phi: Vec, theta: Vec) -> Vec:
        pass

    @abstractmethod
    def grad_phi_outer(self, phi: Vec, theta: Vec) -> Vec:
        pass

    @abstractmethod
    def grad_theta_outer(self, phi: Vec, theta: Vec) -> Vec:
        pass

    @abstractmethod
    def hvp_inner(self, phi: Vec, theta: Vec, v: Vec) -> Vec:
        """Inner Hessian (in phi) times v."""
        pass

    @abstractmethod
    def cross_vjp_inner(self, phi: Vec, theta: Vec, v: Vec) -> Vec:
        """v' times the mixed derivative d_theta d_phi L_in; length |theta|."""
        pass

    def hvp_outer(self, phi: Vec, theta: Vec, v: Vec) -> Vec:
        """
        Outer Hessian (in phi) times v.

        Default implementation differentiates grad_phi_outer along v by
        central differences. Override with the analytic product when known.
        """
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            return np.zeros_like(phi)
        h = 1e-5 / norm
        gp = self.grad_phi_outer(phi + h * v, theta)
        gm = self.grad_phi_outer(phi - h * v, theta)
        return (gp - gm) / (2.0 * h)

    def curvature_bound(self, phi: Vec, theta: Vec, beta: float) -> Optional[float]:
        """
        Upper bound on the augmented Hessian norm over every phi that descent
        from `phi` can reach, or None when the problem has no such bound.

        When given, the default inner step size uses it instead of the
        curvature measured at the starting point.
        """
        return None

    def default_theta(self) -> Vec:
        """Starting outer parameters for training runs."""
        return np.zeros(self.dims()[1])

    def default_phi(self) -> Vec:
        """Cold-start inner parameters."""
        return np.zeros(self.dims()[0])

    # -------------------------------------------------------------------------
    # Augmented loss L(phi, theta, beta) = L_in + beta * L_out
    # -------------------------------------------------------------------------

    def augmented_loss(self, phi: Vec, theta: Vec, beta: float) -> float:
        value = self.inner_loss(phi, theta)
        if beta != 0.0:
            value += beta * self.outer_loss(phi, theta)
        return value

    def grad_phi_augmented(self, phi: Vec, theta: Vec, beta: float) -> Vec:
        grad = self.grad_phi_inner(phi, theta)
        if beta != 0.0:
            grad = grad + beta * self.grad_phi_outer(phi, theta)
        return grad

    def grad_theta_augmented(self, phi: Vec, theta: Vec, beta: float) -> Vec:
        grad = self.grad_theta_inner(phi, theta)
        if beta != 0.0:
            grad = grad + beta * self.grad_theta_outer(phi, theta)
        return grad

    def hvp_augmented(self, phi: Vec, theta: Vec, beta: float, v: Vec) -> Vec:
        hv = self.hvp_inner(phi, theta, v)
        if beta != 0.0:
            hv = hv + beta * self.hvp_outer(phi, theta, v)
        return hv

    def __repr__(self) -> str:
        n_phi, n_theta = self.dims()
        return f"<{type(self).__name__} {self.name} |phi|={n_phi} |theta|={n_theta}>"


class TaskFamily(ABC):
    """
    A distribution of bilevel problems sharing one outer parameter space.

    The outer objective is an expectation over tasks, estimated by sampling.
    Sampling takes an explicit seed; no RNG state is held.
    """

    name: str = "tasks"

    @abstractmethod
    def sample_task(self, seed: int) -> BilevelProblem:
        pass

    @abstractmethod
    def dims(self) -> tuple[int, int]:
        pass

    def default_theta(self) -> Vec:
        return np.zeros(self.dims()[1])

    def default_phi(self) -> Vec:
        return np.zeros(self.dims()[0])

    def __repr__(self) -> str:
        n_phi, n_theta = self.dims()
        return f"<{type(self).__name__} {self.name} |phi|={n_phi} |theta|={n_theta}>"
