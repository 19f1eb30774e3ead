"""
Finite-difference gradients and convergence-order fits.
"""

from __future__ import annotations
import logging
from typing import Callable, Iterable

import numpy as np

from ..errors import InsufficientPoints, NonFiniteEval, NonPositiveValue
from .linalg import Vec, as_vec

logger = logging.getLogger(__name__)


def central_diff_grad(f: Callable[[Vec], float], x, h: float = 1e-5) -> Vec:
    """
    Central-difference gradient of a scalar function.

    Component i is (f(x + h e_i) - f(x - h e_i)) / (2h).

    Raises:
        NonPositiveValue: h <= 0
        NonFiniteEval: f returned NaN/Inf at an evaluation point
    """
    if not h > 0:
        raise NonPositiveValue(f"Step h must be > 0, got {h}")
    x0 = as_vec(x, name="x")
    grad = np.zeros_like(x0)
    for i in range(x0.shape[0]):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteEval(f"Non-finite function value along coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def central_diff_jacobian(f: Callable[[Vec], Vec], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian (rows: outputs, columns: inputs) of a vector function."""
    if not h > 0:
        raise NonPositiveValue(f"Step h must be > 0, got {h}")
    x0 = as_vec(x, name="x")
    cols = []
    for i in range(x0.shape[0]):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        fp = np.asarray(f(xp), dtype=np.float64)
        fm = np.asarray(f(xm), dtype=np.float64)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFiniteEval(f"Non-finite function value along coordinate {i}")
        cols.append((fp - fm) / (2.0 * h))
    if not cols:
        return np.zeros((0, 0))
    return np.column_stack(cols)


def fit_loglog_slope(points: Iterable[tuple[float, float]]) -> float:
    """
    Least-squares slope of log y against log x.

    Raises:
        InsufficientPoints: fewer than 3 points or fewer than 2 distinct x
        NonPositiveValue: any coordinate <= 0
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InsufficientPoints(f"Need at least 3 points, got {len(pts)}")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(xs)) or np.any(~np.isfinite(ys)):
        raise NonFiniteEval("Slope fit received non-finite values")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise NonPositiveValue("Log-log fit requires strictly positive values")
    lx = np.log(xs)
    if np.unique(lx).shape[0] < 2:
        raise InsufficientPoints("All x values are equal; slope is undefined")
    slope, _ = np.polyfit(lx, np.log(ys), 1)
    return float(slope)
