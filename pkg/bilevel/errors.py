"""
Exception hierarchy shared by every bilevel sub-package.

Each error carries the process exit code the CLI uses when it escapes a
command: 2 for configuration/usage problems, 3 for numerical failures.
"""

from __future__ import annotations
from typing import Optional


class BilevelError(Exception):
    """Base class for all bilevel errors."""
    exit_code = 3


# -----------------------------------------------------------------------------
# Configuration / input errors (exit code 2)
# -----------------------------------------------------------------------------

class ConfigError(BilevelError, ValueError):
    """Invalid configuration or arguments."""
    exit_code = 2


class UnknownField(ConfigError):
    """A config object contained a key its schema does not declare."""

    def __init__(self, path: str, allowed: Optional[list[str]] = None):
        self.path = path
        self.allowed = sorted(allowed) if allowed else []
        hint = f" (allowed: {', '.join(self.allowed)})" if self.allowed else ""
        super().__init__(f"Unknown field '{path}'{hint}")

    @classmethod
    def check(cls, schema, data: dict, prefix: str = "") -> None:
        """Raise for the first key of `data` that is not a field of dataclass `schema`."""
        if not isinstance(data, dict):
            raise ConfigError(f"'{prefix or schema.__name__}' must be a mapping, got {type(data).__name__}")
        valid = list(schema.__dataclass_fields__)
        for key in data:
            if key not in valid:
                raise cls(f"{prefix}.{key}" if prefix else str(key), valid)


class DimMismatch(ConfigError):
    """Vector or matrix dimensions do not agree."""
    pass


class UnsupportedStencil(ConfigError):
    """Requested finite-difference stencil is not available."""
    pass


class InsufficientPoints(ConfigError):
    """Not enough distinct points for a fit."""
    pass


class NonPositiveValue(ConfigError):
    """A value that must be strictly positive was not."""
    pass


class NonPositiveBeta(NonPositiveValue):
    """Nudging strength must be strictly positive here."""
    pass


class ConditionViolated(ConfigError):
    """Precondition of a closed-form bound does not hold."""
    pass


class RegionTooSmall(ConfigError):
    """Too few samples to estimate Lipschitz-type constants."""
    pass


class NegativeBetaNotEnabled(ConfigError):
    """Negative nudging requested without allow_negative_beta."""
    pass


class DenseCapExceeded(ConfigError):
    """Dense linear algebra requested above the dimension cap."""
    pass


# -----------------------------------------------------------------------------
# Numerical failures (exit code 3)
# -----------------------------------------------------------------------------

class NumericalError(BilevelError, ArithmeticError):
    """A computation failed numerically."""
    exit_code = 3


class NotSPD(NumericalError):
    """Matrix is not symmetric positive definite."""
    pass


class NonFiniteEval(NumericalError):
    """A function evaluation returned NaN or Inf."""
    pass


class Diverged(NumericalError):
    """An iterative method left the finite range or blew past its cap."""

    def __init__(self, message: str, iters: int = 0):
        self.iters = iters
        super().__init__(message)


class PhaseDiverged(Diverged):
    """A nudged equilibrium-propagation phase diverged."""

    def __init__(self, node: int, beta: float, cause: Exception):
        self.node = node
        self.beta = beta
        self.cause = cause
        super().__init__(
            f"Nudged phase at node {node} (beta={beta:g}) diverged: {cause}",
            iters=getattr(cause, "iters", 0),
        )


class IndefiniteDetected(NumericalError):
    """Conjugate gradients met non-positive curvature."""

    def __init__(self, curvature: float, iteration: int):
        self.curvature = curvature
        self.iteration = iteration
        super().__init__(
            f"Non-positive curvature p'Hp={curvature:.3e} at CG iteration {iteration}"
        )


class OuterStepError(BilevelError):
    """Wraps a failure raised inside one outer-loop step."""

    def __init__(self, step: int, cause: BilevelError):
        self.step = step
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"Outer step {step} failed: {cause}")
