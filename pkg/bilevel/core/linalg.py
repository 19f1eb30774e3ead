"""
Dense vector/matrix primitives.

Vectors are 1-D float64 numpy arrays, matrices 2-D float64 arrays. Helpers
here validate shape and finiteness at module boundaries so callers can rely
on plain numpy arithmetic inside.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import numpy.typing as npt
from scipy import linalg as sla
from scipy.linalg import eigh_tridiagonal

from ..errors import DenseCapExceeded, DimMismatch, NonFiniteEval, NotSPD

logger = logging.getLogger(__name__)

Vec = npt.NDArray[np.float64]
DenseMat = npt.NDArray[np.float64]

# Dense work above this size is refused; the oracle is a desk-scale tool.
DENSE_CAP = 2000

SYMMETRY_TOL = 1e-10


def as_vec(x, dim: Optional[int] = None, name: str = "vector") -> Vec:
    """
    Coerce to a finite 1-D float64 array.

    Args:
        x: Array-like (scalars become length-1 vectors)
        dim: Required length, if any
        name: Used in error messages

    Raises:
        DimMismatch: Wrong dimension
        NonFiniteEval: NaN or Inf present
    """
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v.ndim != 1:
        raise DimMismatch(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimMismatch(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteEval(f"{name} contains non-finite entries")
    return v


def as_mat(a, name: str = "matrix") -> DenseMat:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1 and m.size == 1:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise DimMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteEval(f"{name} contains non-finite entries")
    return m


def check_dense_cap(n: int) -> None:
    if n > DENSE_CAP:
        raise DenseCapExceeded(
            f"Dense operations are capped at n <= {DENSE_CAP}, got n = {n}"
        )


@dataclass(frozen=True)
class SPDFactor:
    """Cholesky factorization of a symmetric positive definite matrix."""
    factor: tuple
    n: int

    def solve(self, b) -> Vec:
        rhs = as_vec(b, self.n, "right-hand side")
        return sla.cho_solve(self.factor, rhs)


def factor_spd(a) -> SPDFactor:
    """
    Factorize an SPD matrix.

    Raises:
        DimMismatch: Not square
        DenseCapExceeded: Above the dense cap
        NotSPD: Asymmetric beyond tolerance or non-positive pivot
    """
    m = as_mat(a)
    n, cols = m.shape
    if n != cols:
        raise DimMismatch(f"Matrix must be square, got {m.shape}")
    check_dense_cap(n)

    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise NotSPD(f"Matrix is not symmetric (max |A - A'| = {asym:.3e})")

    try:
        factor = sla.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NotSPD(f"Cholesky factorization failed: {e}") from e
    return SPDFactor(factor=factor, n=n)


def solve_spd(a, b) -> Vec:
    """
    Solve A x = b for symmetric positive definite A.

    A is not modified (the factorization works on a copy).
    """
    m = as_mat(a)
    rhs = as_vec(b, name="right-hand side")
    if m.shape[0] != rhs.shape[0]:
        raise DimMismatch(
            f"Matrix has {m.shape[0]} rows but right-hand side has length {rhs.shape[0]}"
        )
    return factor_spd(m).solve(rhs)


def materialize(op: Callable[[Vec], Vec], n: int) -> DenseMat:
    """Assemble the matrix of a linear operator by applying it to basis vectors."""
    check_dense_cap(n)
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(op(e), dtype=np.float64))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def ritz_extremes(
    op: Callable[[Vec], Vec],
    n: int,
    iters: int = 30,
    seed: int = 0,
) -> tuple[float, float]:
    """
    Extreme Ritz values of a symmetric operator via Lanczos.

    Full reorthogonalization keeps the Krylov basis orthonormal, so the
    returned values lie inside [lambda_min, lambda_max] and are exact once
    iters >= n.

    Args:
        op: Symmetric linear operator (e.g. a Hessian-vector product)
        n: Dimension
        iters: Maximum Krylov dimension
        seed: Seed of the starting vector

    Returns:
        (smallest Ritz value, largest Ritz value)
    """
    if n == 0:
        return 0.0, 0.0
    k = max(1, min(iters, n))
    q = np.random.default_rng(seed).standard_normal(n)
    q /= np.linalg.norm(q)

    basis = [q]
    alphas: list[float] = []
    betas: list[float] = []
    for j in range(k):
        w = np.asarray(op(basis[j]), dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise NonFiniteEval("Operator returned non-finite values during Lanczos")
        alpha = float(basis[j] @ w)
        alphas.append(alpha)
        if j == k - 1:
            break
        Q = np.column_stack(basis)
        w = w - Q @ (Q.T @ w)
        w = w - Q @ (Q.T @ w)
        beta = float(np.linalg.norm(w))
        if beta <= 1e-12 * max(1.0, abs(alpha)):
            break
        betas.append(beta)
        basis.append(w / beta)

    if len(alphas) == 1:
        return alphas[0], alphas[0]
    ritz = eigh_tridiagonal(
        np.array(alphas), np.array(betas[: len(alphas) - 1]), eigvals_only=True
    )
    return float(ritz[0]), float(ritz[-1])
