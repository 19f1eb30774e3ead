"""
Synthetic regression data and the least-squares building block.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..core.linalg import Vec, as_mat, as_vec
from ..errors import ConfigError, DimMismatch


class TargetKind(Enum):
    """Planted target families."""
    LINEAR = "linear"
    SINUSOID = "sinusoid"


@dataclass(frozen=True)
class Dataset:
    """Design matrix with targets."""
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = as_mat(self.X, "X").copy()
        y = as_vec(self.y, X.shape[0], "y").copy()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    # Mean squared error 1/2 ||X w - y||^2 / m and its derivatives.

    def mse(self, w: Vec) -> float:
        r = self.X @ w - self.y
        return float(0.5 * (r @ r) / self.size)

    def mse_grad(self, w: Vec) -> Vec:
        return self.X.T @ (self.X @ w - self.y) / self.size

    def mse_hvp(self, v: Vec) -> Vec:
        return self.X.T @ (self.X @ v) / self.size


def planted_targets(X: np.ndarray, w: Vec, kind: TargetKind) -> np.ndarray:
    z = X @ w
    if kind is TargetKind.LINEAR:
        return z
    return np.sin(z)


def make_regression(
    n_train: int,
    n_val: int,
    n_features: int,
    seed: int,
    noise: float = 0.1,
    weight_scale: float = 0.05,
    target: TargetKind | str = TargetKind.LINEAR,
    weights: Vec | None = None,
) -> tuple[Dataset, Dataset, Vec]:
    """
    Gaussian design, planted targets plus Gaussian noise, split train/val.

    Args:
        n_train: Training rows
        n_val: Validation rows
        n_features: Columns of the design
        seed: Seed of the whole draw
        noise: Noise standard deviation
        weight_scale: Std of planted weights when `weights` is not given
        target: linear or sinusoid
        weights: Planted weights (overrides the random draw)

    Returns:
        (train, val, planted weights)
    """
    if n_train < 1 or n_val < 1 or n_features < 1:
        raise ConfigError("n_train, n_val and n_features must all be >= 1")
    try:
        kind = TargetKind(target)
    except ValueError:
        raise ConfigError(f"Unknown target kind '{target}'") from None

    rng = np.random.default_rng(seed)
    if weights is None:
        w = weight_scale * rng.standard_normal(n_features)
    else:
        w = as_vec(weights, name="weights")
        if w.shape[0] != n_features:
            raise DimMismatch(f"weights has length {w.shape[0]}, expected {n_features}")
    n = n_train + n_val
    X = rng.standard_normal((n, n_features))
    y = planted_targets(X, w, kind) + noise * rng.standard_normal(n)
    train = Dataset(X[:n_train], y[:n_train])
    val = Dataset(X[n_train:], y[n_train:])
    return train, val, w
