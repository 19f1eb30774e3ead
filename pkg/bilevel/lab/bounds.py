"""
Error-bound formulas for equilibrium propagation and the perturbed linear
system check.
"""

from __future__ import annotations
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..core.linalg import Vec, as_vec
from ..errors import ConditionViolated, ConfigError, NonPositiveBeta, NonPositiveValue, UnknownField
from .records import SweepRecord

logger = logging.getLogger(__name__)

OPTIMAL_BETA_GRID = np.logspace(-6, 3, 1000)

# A measured error above bound * BOUND_SLACK counts as a violation.
BOUND_SLACK = 1.05

# Relative tolerance when comparing a measured error against its bound.
ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class BoundConstants:
    """
    Constants of the equilibrium-propagation error bound.

    B_in and B_out are Lipschitz constants in phi of d_theta L_in and
    d_theta L_out, mu and L the extreme inner curvatures, rho the Lipschitz
    constant of the inner Hessian, sigma that of the cross derivative, and C
    the constant of the O(beta) truncation term.
    """
    B_in: float
    B_out: float
    C: float
    mu: float
    rho: float
    L: float
    sigma: Optional[float] = None

    def __post_init__(self):
        for name in ("B_in", "B_out", "C", "mu", "rho", "L", "sigma"):
            value = getattr(self, name)
            if value is None and name == "sigma":
                continue
            if value is None or not math.isfinite(value) or not value > 0:
                raise NonPositiveValue(f"Bound constant {name} must be finite and > 0, got {value}")

    def with_C(self, C: float) -> BoundConstants:
        return BoundConstants(self.B_in, self.B_out, C, self.mu, self.rho, self.L, self.sigma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> BoundConstants:
        UnknownField.check(cls, data, prefix="constants")
        values = {}
        for key, value in data.items():
            try:
                values[key] = None if value is None else float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"constants.{key} must be a number, got {value!r}") from None
        return cls(**values)


def eval_ep_bound(k: BoundConstants, delta: float, delta_prime: float, beta: float) -> float:
    """
    B_in (delta + delta') / beta + B_out delta' + C beta / (1 + beta).

    Raises:
        NonPositiveBeta: beta <= 0
    """
    if not beta > 0:
        raise NonPositiveBeta(f"beta must be > 0, got {beta}")
    return k.B_in * (delta + delta_prime) / beta + k.B_out * delta_prime + k.C * beta / (1.0 + beta)


def _check_condition(k: BoundConstants, delta: float, delta_prime: float) -> float:
    if delta < 0 or delta_prime < 0:
        raise NonPositiveValue(f"Injected errors must be >= 0, got delta={delta}, delta'={delta_prime}")
    s = k.B_in * (delta + delta_prime)
    if s >= k.C:
        raise ConditionViolated(
            f"delta + delta' = {delta + delta_prime:.3e} is not below C / B_in = {k.C / k.B_in:.3e}"
        )
    return s


def optimal_beta_bound(k: BoundConstants, delta: float, delta_prime: float) -> tuple[float, float]:
    """
    Minimize the bound over a log grid of 1000 betas in [1e-6, 1e3].

    Returns:
        (beta, bound) at the grid minimum

    Raises:
        ConditionViolated: delta + delta' >= C / B_in
    """
    _check_condition(k, delta, delta_prime)
    values = np.array([eval_ep_bound(k, delta, delta_prime, b) for b in OPTIMAL_BETA_GRID])
    i = int(np.argmin(values))
    return float(OPTIMAL_BETA_GRID[i]), float(values[i])


def closed_form_optimal_beta(k: BoundConstants, delta: float, delta_prime: float) -> tuple[float, float]:
    """
    Exact minimizer of the bound over beta > 0.

    With s = B_in (delta + delta'), beta* = sqrt(s) / (sqrt(C) - sqrt(s)) and
    the minimum is B_out delta' + 2 sqrt(C s) - s. For s = 0 the infimum is
    approached as beta -> 0 and beta* is reported as 0.

    Raises:
        ConditionViolated: delta + delta' >= C / B_in
    """
    s = _check_condition(k, delta, delta_prime)
    root_s, root_c = math.sqrt(s), math.sqrt(k.C)
    beta = root_s / (root_c - root_s)
    return beta, k.B_out * delta_prime + 2.0 * math.sqrt(k.C * s) - s


def inject_error(phi_star, delta: float, seed: int) -> Vec:
    """
    phi_star + delta * u for a seeded direction u uniform on the unit sphere.

    Raises:
        NonPositiveValue: delta < 0
    """
    phi_star = as_vec(phi_star, name="phi_star")
    if delta < 0:
        raise NonPositiveValue(f"delta must be >= 0, got {delta}")
    if delta == 0 or phi_star.shape[0] == 0:
        return phi_star.copy()
    u = np.random.default_rng(seed).standard_normal(phi_star.shape[0])
    u /= np.linalg.norm(u)
    return phi_star + delta * u


def attach_bounds(records: Iterable[SweepRecord], constants: BoundConstants) -> list[SweepRecord]:
    """Fill bound_value on every successful EP record that has a beta."""
    out = []
    for record in records:
        if record.ok and record.beta is not None and record.beta > 0:
            bound = eval_ep_bound(constants, record.delta, record.delta_prime, record.beta)
            out.append(record.with_bound(bound))
        else:
            out.append(record)
    return out


def bound_violations(records: Iterable[SweepRecord], slack: float = BOUND_SLACK) -> list[SweepRecord]:
    """Records whose error exceeds bound_value * slack."""
    violations = [r for r in records if r.violates_bound(slack)]
    for r in violations:
        logger.warning(
            f"Bound violated: {r.method} beta={r.beta} seed={r.seed} "
            f"error={r.grad_error:.3e} bound={r.bound_value:.3e}"
        )
    return violations


@dataclass
class PerturbationReport:
    """Outcome of the perturbed linear system trials."""
    trials: int
    violations: int
    max_ratio: float
    ratios: list[float] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"trials": self.trials, "violations": self.violations, "max_ratio": self.max_ratio}


def perturbation_bound(a_inv_norm: float, eps_a: float, eps_b: float, x_norm: float) -> float:
    """
    ||x - x'|| <= ||A^-1|| / (1 - eps_A ||A^-1||) * (eps_b + ||A^-1 b|| eps_A)

    for Ax = b, A'x' = b', ||A - A'|| <= eps_A, ||b - b'|| <= eps_b.

    Raises:
        ConditionViolated: eps_A ||A^-1|| >= 1
    """
    if eps_a * a_inv_norm >= 1.0:
        raise ConditionViolated(f"eps_A * ||A^-1|| = {eps_a * a_inv_norm:.3f} must be < 1")
    return a_inv_norm / (1.0 - eps_a * a_inv_norm) * (eps_b + x_norm * eps_a)


def perturbation_trials(n: int, trials: int = 500, seed: int = 0) -> PerturbationReport:
    """
    Random SPD systems with random perturbations of matrix and right-hand side,
    each measured against perturbation_bound.

    Args:
        n: System dimension
        trials: Number of random systems
        seed: Seed of the whole run
    """
    if n < 1 or trials < 1:
        raise NonPositiveValue(f"n and trials must be >= 1, got n={n}, trials={trials}")
    rng = np.random.default_rng(seed)
    ratios = []
    violations = 0
    for _ in range(trials):
        g = rng.standard_normal((n, n))
        a = g @ g.T + rng.uniform(0.1, 2.0) * np.eye(n)
        b = rng.standard_normal(n)
        a_inv_norm = 1.0 / float(np.linalg.eigvalsh(a)[0])

        e = rng.standard_normal((n, n))
        eps_a = rng.uniform(0.01, 0.95) / a_inv_norm
        e *= eps_a / np.linalg.norm(e, 2)
        db = rng.standard_normal(n)
        eps_b = float(rng.uniform(0.01, 1.0))
        db *= eps_b / np.linalg.norm(db)

        x = np.linalg.solve(a, b)
        x_pert = np.linalg.solve(a + e, b + db)
        measured = float(np.linalg.norm(x - x_pert))
        bound = perturbation_bound(a_inv_norm, eps_a, eps_b, float(np.linalg.norm(x)))
        ratio = measured / bound if bound > 0 else 0.0
        ratios.append(ratio)
        if measured > bound * (1.0 + ROUNDING_SLACK):
            violations += 1

    report = PerturbationReport(trials=trials, violations=violations, max_ratio=max(ratios), ratios=ratios)
    logger.info(f"Perturbation trials: {violations}/{trials} violations, max ratio {report.max_ratio:.4f}")
    return report
