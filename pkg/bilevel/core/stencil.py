"""
Finite-difference stencils for derivatives in the nudging strength.

Forward stencils use nodes 0, 1, ..., p-1 (in units of the step) and solve
the Vandermonde moment system sum_i alpha_i * i**k = [k == 1] for k < p.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import sympy as sp

from ..errors import NonPositiveBeta, UnsupportedStencil

logger = logging.getLogger(__name__)

# Above this size the rational solve is replaced by floating elimination.
EXACT_MAX_POINTS = 8


class StencilKind(Enum):
    """Supported stencil families."""
    FORWARD = "forward"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class FDStencil:
    """
    Finite-difference coefficients with their nodes.

    `nodes` are integer multiples of `step`; `exact` holds the rational
    coefficients when they were computed exactly.
    """
    points: int
    kind: StencilKind
    nodes: tuple[int, ...]
    coefficients: tuple[float, ...]
    step: Optional[float] = None
    exact: Optional[tuple[sp.Rational, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.nodes) != self.points or len(self.coefficients) != self.points:
            raise UnsupportedStencil(
                f"Stencil with {self.points} points needs {self.points} nodes and coefficients"
            )

    def with_step(self, beta: float) -> FDStencil:
        """Attach the step beta (> 0)."""
        if not beta > 0:
            raise NonPositiveBeta(f"Stencil step must be > 0, got {beta}")
        return replace(self, step=float(beta))

    def moment(self, k: int) -> float:
        """sum_i alpha_i * node_i**k"""
        return float(sum(a * float(n) ** k for a, n in zip(self.coefficients, self.nodes)))

    def format_coefficients(self) -> str:
        """Space-separated coefficients, as rationals when known exactly."""
        if self.exact is not None:
            return " ".join(str(c) for c in self.exact)
        return " ".join(repr(c) for c in self.coefficients)

    def to_dict(self) -> dict:
        return {
            'points': self.points,
            'kind': self.kind.value,
            'nodes': list(self.nodes),
            'coefficients': list(self.coefficients),
            'step': self.step,
        }

    def __repr__(self) -> str:
        step = f", step={self.step:g}" if self.step is not None else ""
        return f"FDStencil({self.kind.value}, p={self.points}{step})"


def _forward_exact(p: int) -> tuple[sp.Rational, ...]:
    vander = sp.Matrix(p, p, lambda k, i: sp.Integer(i) ** k)
    rhs = sp.Matrix([1 if k == 1 else 0 for k in range(p)])
    sol = vander.LUsolve(rhs)
    return tuple(sp.Rational(c) for c in sol)


def _forward_float(p: int) -> tuple[float, ...]:
    idx = np.arange(p, dtype=np.float64)
    vander = np.vander(idx, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[1] = 1.0
    return tuple(float(c) for c in np.linalg.solve(vander, rhs))


def solve_fd_stencil(p: int, kind: StencilKind | str = StencilKind.FORWARD) -> FDStencil:
    """
    Coefficients of a first-derivative stencil (step attached later).

    Args:
        p: Number of points (>= 2 forward, exactly 3 symmetric)
        kind: forward or symmetric

    Raises:
        UnsupportedStencil: p out of range for the kind
    """
    try:
        kind = StencilKind(kind)
    except ValueError:
        raise UnsupportedStencil(f"Unknown stencil kind '{kind}'") from None

    if kind is StencilKind.SYMMETRIC:
        if p != 3:
            raise UnsupportedStencil(f"Symmetric stencil requires p = 3, got {p}")
        exact = (sp.Rational(-1, 2), sp.Integer(0), sp.Rational(1, 2))
        return FDStencil(
            points=3,
            kind=kind,
            nodes=(-1, 0, 1),
            coefficients=tuple(float(c) for c in exact),
            exact=exact,
        )

    if p < 2:
        raise UnsupportedStencil(f"Forward stencil requires p >= 2, got {p}")

    if p <= EXACT_MAX_POINTS:
        exact = _forward_exact(p)
        coefficients = tuple(float(c) for c in exact)
    else:
        logger.debug(f"Solving {p}-point Vandermonde system in floating point")
        exact = None
        coefficients = _forward_float(p)

    return FDStencil(
        points=p,
        kind=kind,
        nodes=tuple(range(p)),
        coefficients=coefficients,
        exact=exact,
    )
