"""
Estimator result types and estimator settings.
"""

from __future__ import annotations
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from ..core.linalg import Vec
from ..core.stencil import FDStencil, solve_fd_stencil
from ..errors import ConfigError, NonPositiveBeta, NonPositiveValue, UnknownField


class Method(Enum):
    """Outer-gradient estimators."""
    ORACLE = "oracle"
    FIRST_ORDER = "first_order"
    IDENTITY = "identity"
    RBP = "rbp"
    CG = "cg"
    EP = "ep"


@dataclass(frozen=True)
class PiVector:
    """Approximate solution of H pi = d_phi L_out (pi as a column vector)."""
    pi: Vec

    def residual(self, hvp, g: Vec) -> float:
        """||H pi - g|| for a Hessian-vector product `hvp`."""
        return float(np.linalg.norm(hvp(self.pi) - g))


@dataclass
class HypergradEstimate:
    """
    One outer-gradient estimate with its cost counters.

    Attributes:
        grad: Estimated gradient (length |theta|)
        method: Estimator that produced it
        phase2_iters: Second-phase iterations (CG/RBP steps or nudged-phase solver steps)
        hvp_count: Inner Hessian-vector products spent
        inner_solve_count: Extra inner minimizations spent
        beta: Nudging step for equilibrium propagation
        residual: Final second-phase residual norm when one exists
        pi: Second-phase vector when one was formed
        diagnostics: Method-specific extras
    """
    grad: Vec
    method: Method
    phase2_iters: int = 0
    hvp_count: int = 0
    inner_solve_count: int = 0
    beta: Optional[float] = None
    residual: Optional[float] = None
    pi: Optional[Vec] = field(default=None, repr=False)
    diagnostics: dict[str, Any] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "grad": [float(g) for g in self.grad],
            "method": self.method.value,
            "phase2_iters": self.phase2_iters,
            "hvp_count": self.hvp_count,
            "inner_solve_count": self.inner_solve_count,
            "beta": self.beta,
            "residual": self.residual,
            "diagnostics": dict(self.diagnostics),
        }

    def __str__(self) -> str:
        grad = ", ".join(f"{g:.6g}" for g in self.grad)
        return f"{self.method.value}: [{grad}] (phase2={self.phase2_iters}, hvp={self.hvp_count})"


# -----------------------------------------------------------------------------
# Settings
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class RBPSpec:
    """Recurrent backpropagation: step alpha (None -> 1/L), max steps k, update tolerance."""
    alpha: Optional[float] = None
    k: int = 100
    tol: float = 1e-10

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise NonPositiveValue(f"estimator.rbp.alpha must be > 0, got {self.alpha}")
        if int(self.k) < 0:
            raise ConfigError(f"estimator.rbp.k must be >= 0, got {self.k}")
        if self.tol < 0:
            raise ConfigError(f"estimator.rbp.tol must be >= 0, got {self.tol}")


@dataclass(frozen=True)
class CGSpec:
    """Conjugate gradients: iteration cap and relative residual tolerance."""
    max_iters: int = 100
    tol: float = 1e-10

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise NonPositiveValue(f"estimator.cg.max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise NonPositiveValue(f"estimator.cg.tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class EPSpec:
    """Equilibrium propagation stencil and phase options."""
    points: int = 2
    kind: str = "forward"
    beta: float = 0.01
    allow_negative_beta: bool = False
    warm_start: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise NonPositiveBeta(f"estimator.ep.beta must be > 0, got {self.beta}")
        solve_fd_stencil(int(self.points), self.kind)

    def stencil(self) -> FDStencil:
        return solve_fd_stencil(int(self.points), self.kind).with_step(self.beta)


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run, with per-method settings."""
    method: str = "cg"
    rbp: RBPSpec = field(default_factory=RBPSpec)
    cg: CGSpec = field(default_factory=CGSpec)
    ep: EPSpec = field(default_factory=EPSpec)

    def __post_init__(self):
        try:
            Method(self.method)
        except ValueError:
            raise ConfigError(
                f"Unknown estimator '{self.method}' "
                f"(expected one of {', '.join(m.value for m in Method)})"
            ) from None

    @property
    def kind(self) -> Method:
        return Method(self.method)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, prefix: str = "estimator") -> EstimatorSpec:
        UnknownField.check(cls, data, prefix)
        subs = {"rbp": RBPSpec, "cg": CGSpec, "ep": EPSpec}
        kwargs = {}
        for key, value in data.items():
            if key in subs:
                UnknownField.check(subs[key], value, f"{prefix}.{key}")
                kwargs[key] = subs[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)
