"""
Outer-gradient (hypergradient) estimators.
"""

from .models import (
    CGSpec,
    EPSpec,
    EstimatorSpec,
    HypergradEstimate,
    Method,
    PiVector,
    RBPSpec,
)
from .implicit import (
    assemble_gradient,
    conjugate_gradient,
    first_order,
    inverse_curvature,
    one_step_identity,
    oracle_exact,
    rbp_neumann,
)
from .equilibrium import ep_estimate, ep_pi_recover, node_order
from .dispatch import estimate_hypergradient

__all__ = [
    "CGSpec",
    "EPSpec",
    "EstimatorSpec",
    "HypergradEstimate",
    "Method",
    "PiVector",
    "RBPSpec",
    "assemble_gradient",
    "conjugate_gradient",
    "first_order",
    "inverse_curvature",
    "one_step_identity",
    "oracle_exact",
    "rbp_neumann",
    "ep_estimate",
    "ep_pi_recover",
    "node_order",
    "estimate_hypergradient",
]
