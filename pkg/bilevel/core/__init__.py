"""
Core numerics: dense linear algebra, stencils, finite differences.
"""

from .linalg import (
    DENSE_CAP,
    DenseMat,
    SPDFactor,
    Vec,
    as_mat,
    as_vec,
    factor_spd,
    materialize,
    ritz_extremes,
    solve_spd,
)
from .stencil import FDStencil, StencilKind, solve_fd_stencil
from .finite_diff import central_diff_grad, central_diff_jacobian, fit_loglog_slope
from .parallel import ordered_map

__all__ = [
    "DENSE_CAP",
    "DenseMat",
    "SPDFactor",
    "Vec",
    "as_mat",
    "as_vec",
    "factor_spd",
    "materialize",
    "ritz_extremes",
    "solve_spd",
    "FDStencil",
    "StencilKind",
    "solve_fd_stencil",
    "central_diff_grad",
    "central_diff_jacobian",
    "fit_loglog_slope",
    "ordered_map",
]
