"""
Meta-learned ridge regression.

Each task is a small regression problem whose planted weights scatter around
a shared center. The outer parameters are theta = (log lambda, w0): the
regularization strength and the center the inner solution is pulled toward.

    L_in(phi, theta; task)  = MSE(phi, train_task) + lambda/2 ||phi - w0||^2
    L_out(phi, theta; task) = MSE(phi, val_task)
"""

from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from ..core.linalg import Vec
from ..errors import DimMismatch, NonPositiveValue
from .base import BilevelProblem, TaskFamily
from .data import Dataset, make_regression

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1


def task_seed_sequence(*keys: int) -> np.random.SeedSequence:
    """SeedSequence from arbitrary (possibly negative) integer keys."""
    return np.random.SeedSequence([int(k) & _SEED_MASK for k in keys])


@dataclass(frozen=True, eq=False)
class MetaRidgeTask(BilevelProblem):
    """One sampled task of a MetaRidge family."""
    train: Dataset
    val: Dataset
    name: str = "meta_ridge_task"

    def __post_init__(self):
        if self.train.n_features != self.val.n_features:
            raise DimMismatch("Train and val feature counts differ")

    def dims(self) -> tuple[int, int]:
        d = self.train.n_features
        return d, d + 1

    @staticmethod
    def _split(theta) -> tuple[float, Vec]:
        theta = np.asarray(theta, dtype=np.float64)
        return float(np.exp(theta[0])), theta[1:]

    def inner_loss(self, phi, theta) -> float:
        lam, w0 = self._split(theta)
        d = phi - w0
        return self.train.mse(phi) + 0.5 * lam * float(d @ d)

    def outer_loss(self, phi, theta) -> float:
        return self.val.mse(phi)

    def grad_phi_inner(self, phi, theta) -> Vec:
        lam, w0 = self._split(theta)
        return self.train.mse_grad(phi) + lam * (phi - w0)

    def grad_theta_inner(self, phi, theta) -> Vec:
        lam, w0 = self._split(theta)
        d = phi - w0
        return np.concatenate([[0.5 * lam * float(d @ d)], -lam * d])

    def grad_phi_outer(self, phi, theta) -> Vec:
        return self.val.mse_grad(phi)

    def grad_theta_outer(self, phi, theta) -> Vec:
        return np.zeros(self.dims()[1])

    def hvp_inner(self, phi, theta, v) -> Vec:
        lam, _ = self._split(theta)
        return self.train.mse_hvp(v) + lam * v

    def hvp_outer(self, phi, theta, v) -> Vec:
        return self.val.mse_hvp(v)

    def cross_vjp_inner(self, phi, theta, v) -> Vec:
        lam, w0 = self._split(theta)
        return np.concatenate([[lam * float(v @ (phi - w0))], -lam * v])


@dataclass(frozen=True)
class MetaRidge(TaskFamily):
    """
    Family of ridge tasks with planted weights w_task = center + spread * N(0, I).

    Args:
        seed: Seed of the shared center
        n_features: Weight dimension
        n_train: Training rows per task
        n_val: Validation rows per task
        noise: Target noise std
        center_scale: Std of the shared center
        spread: Std of per-task deviations from the center
    """
    seed: int = 0
    n_features: int = 5
    n_train: int = 16
    n_val: int = 4
    noise: float = 0.1
    center_scale: float = 1.0
    spread: float = 0.1
    name: str = "meta_ridge"

    def __post_init__(self):
        if self.n_features < 1 or self.n_train < 1 or self.n_val < 1:
            raise NonPositiveValue("n_features, n_train and n_val must be >= 1")
        if self.spread < 0 or self.noise < 0:
            raise NonPositiveValue("spread and noise must be >= 0")

    def dims(self) -> tuple[int, int]:
        return self.n_features, self.n_features + 1

    @property
    def center(self) -> Vec:
        rng = np.random.default_rng(task_seed_sequence(self.seed))
        return self.center_scale * rng.standard_normal(self.n_features)

    def sample_task(self, seed: int) -> MetaRidgeTask:
        rng = np.random.default_rng(task_seed_sequence(self.seed, seed))
        weights = self.center + self.spread * rng.standard_normal(self.n_features)
        data_seed = int(rng.integers(0, 2**32))
        train, val, _ = make_regression(
            self.n_train, self.n_val, self.n_features, data_seed,
            noise=self.noise, weights=weights,
        )
        logger.debug(f"Sampled meta-ridge task {seed} (family seed {self.seed})")
        return MetaRidgeTask(train=train, val=val, name=f"{self.name}[{seed}]")
