"""
Bound experiments: beta sweeps with injected errors and error-vs-delta
scaling fits.

Every cell draws its error directions from a SeedSequence built out of the
master seed and the cell's integer coordinates, and cells are mapped in
input order, so results do not depend on the thread count.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ..core.finite_diff import fit_loglog_slope
from ..core.linalg import Vec, as_vec
from ..core.parallel import ordered_map
from ..errors import BilevelError, ConfigError
from ..estimators.implicit import conjugate_gradient, oracle_exact, rbp_neumann
from ..problems.base import BilevelProblem
from ..solver.inner import SolverConfig, minimize_augmented
from .bounds import BoundConstants, attach_bounds, inject_error
from .records import SweepRecord

logger = logging.getLogger(__name__)

# Reference equilibria are solved to this gradient norm.
EXACT_SOLVER = SolverConfig(grad_tol=1e-12, max_iters=200000)

SCALING_METHODS = ("cg", "rbp", "ep_opt_beta")
DEFAULT_SCALING_BETAS = np.logspace(-6, 0, 61)

Seeds = Union[int, Sequence[int]]


def _seed_list(seeds: Seeds) -> list[int]:
    if isinstance(seeds, (int, np.integer)):
        if seeds < 1:
            raise ConfigError(f"Need at least one seed, got {seeds}")
        return list(range(int(seeds)))
    out = [int(s) for s in seeds]
    if not out:
        raise ConfigError("Need at least one seed")
    return out


def direction_seeds(*keys: int) -> tuple[int, int]:
    """Two direction seeds (first phase, second phase) for one cell."""
    state = np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]).generate_state(2)
    return int(state[0]), int(state[1])


def ep_two_point(problem: BilevelProblem, theta: Vec, phi0: Vec, phi_beta: Vec, beta: float) -> Vec:
    """(d_theta L(phi_beta, theta, beta) - d_theta L_in(phi0, theta)) / beta."""
    return (problem.grad_theta_augmented(phi_beta, theta, beta) - problem.grad_theta_inner(phi0, theta)) / beta


@dataclass
class ReferencePoints:
    """Accurately solved equilibria and the oracle gradient at phi*_0."""
    theta: Vec
    phi0: Vec
    oracle: Vec
    betas: list[float] = field(default_factory=list)
    phi_betas: dict[int, Vec] = field(default_factory=dict)
    failures: dict[int, BilevelError] = field(default_factory=dict)


def solve_reference(
    problem: BilevelProblem,
    theta,
    betas: Sequence[float] = (),
    solver: SolverConfig = EXACT_SOLVER,
) -> ReferencePoints:
    """
    Solve phi*_0 from zero and every phi*_beta, chained in increasing beta.

    A beta whose solve fails is recorded in failures; the others still get
    their reference point.

    Raises:
        Diverged: The free phase itself diverged
        NotSPD: Oracle Hessian not positive definite
    """
    n_phi, n_theta = problem.dims()
    theta = as_vec(theta, n_theta, "theta")
    free = minimize_augmented(problem, theta, 0.0, np.zeros(n_phi), solver)
    oracle = oracle_exact(problem, free.phi_hat, theta).grad
    ref = ReferencePoints(theta=theta, phi0=free.phi_hat, oracle=oracle, betas=[float(b) for b in betas])

    start = free.phi_hat
    for i in sorted(range(len(ref.betas)), key=lambda j: ref.betas[j]):
        beta = ref.betas[i]
        if not beta > 0:
            ref.failures[i] = ConfigError(f"Sweep betas must be > 0, got {beta}")
            continue
        try:
            report = minimize_augmented(problem, theta, beta, start, solver)
        except BilevelError as e:
            logger.warning(f"Reference solve at beta={beta:g} failed: {e}")
            ref.failures[i] = e
            continue
        ref.phi_betas[i] = report.phi_hat
        start = report.phi_hat
    return ref


def run_beta_sweep(
    problem: BilevelProblem,
    theta,
    betas: Sequence[float],
    delta: float,
    delta_prime: Optional[float],
    seeds: Seeds,
    master_seed: int = 0,
    threads: int = 1,
    constants: Optional[BoundConstants] = None,
    solver: Optional[SolverConfig] = None,
) -> list[SweepRecord]:
    """
    Two-point EP error over a beta grid with injected phase errors.

    For each beta and seed the free equilibrium gets an error of norm delta.
    With a fixed delta_prime the nudged equilibrium gets an independent error
    of that norm. With delta_prime=None the nudged phase is instead solved by
    `solver` warm-started at the perturbed free point, and the measured
    distance to phi*_beta is recorded as delta_prime.

    Directions depend on (master_seed, seed) only, so every beta sees the same
    perturbation directions.

    Args:
        problem: Bilevel problem (strongly convex)
        theta: Outer parameters
        betas: Nudging strengths, all > 0
        delta: Free-phase error norm
        delta_prime: Nudged-phase error norm, or None for the solver protocol
        seeds: Seed values, or a count n meaning range(n)
        master_seed: Seed mixed into every cell
        threads: Worker threads
        constants: Attach bound values when given
        solver: Nudged-phase solver for the delta_prime=None protocol

    Returns:
        Records ordered by beta index, then seed
    """
    seed_values = _seed_list(seeds)
    if delta < 0 or (delta_prime is not None and delta_prime < 0):
        raise ConfigError(f"Injected errors must be >= 0, got delta={delta}, delta'={delta_prime}")
    solver = solver or SolverConfig()
    ref = solve_reference(problem, theta, betas)
    logger.info(
        f"Beta sweep on {problem!r}: {len(ref.betas)} betas x {len(seed_values)} seeds, "
        f"delta={delta:g}, delta'={'solver' if delta_prime is None else f'{delta_prime:g}'}"
    )

    def cell(key: tuple[int, int]) -> SweepRecord:
        i, seed = key
        beta = ref.betas[i]
        used_prime = float("nan") if delta_prime is None else delta_prime
        if i in ref.failures:
            return SweepRecord.failed("ep", beta, delta, used_prime, seed, ref.failures[i])
        try:
            s0, s1 = direction_seeds(master_seed, seed)
            phi0 = inject_error(ref.phi0, delta, s0)
            if delta_prime is None:
                report = minimize_augmented(problem, ref.theta, beta, phi0, solver)
                phi_beta = report.phi_hat
                used_prime = float(np.linalg.norm(phi_beta - ref.phi_betas[i]))
            else:
                phi_beta = inject_error(ref.phi_betas[i], delta_prime, s1)
            estimate = ep_two_point(problem, ref.theta, phi0, phi_beta, beta)
            error = float(np.linalg.norm(estimate - ref.oracle))
        except BilevelError as e:
            logger.warning(f"Sweep cell beta={beta:g} seed={seed} failed: {e}")
            return SweepRecord.failed("ep", beta, delta, used_prime, seed, e)
        return SweepRecord("ep", beta, delta, used_prime, seed, error)

    keys = [(i, s) for i in range(len(ref.betas)) for s in seed_values]
    records = ordered_map(cell, keys, threads)
    if constants is not None:
        records = attach_bounds(records, constants)
    return records


@dataclass
class BetaSummary:
    beta: float
    mean_error: float
    max_error: float
    ok: int
    failed: int


def summarize_by_beta(records: Iterable[SweepRecord]) -> list[BetaSummary]:
    """Mean and max error per beta, in first-seen beta order."""
    groups: dict[float, list[SweepRecord]] = {}
    for r in records:
        if r.beta is None:
            continue
        groups.setdefault(r.beta, []).append(r)
    out = []
    for beta, group in groups.items():
        errors = [r.grad_error for r in group if r.ok]
        out.append(
            BetaSummary(
                beta=beta,
                mean_error=float(np.mean(errors)) if errors else float("nan"),
                max_error=float(np.max(errors)) if errors else float("nan"),
                ok=len(errors),
                failed=len(group) - len(errors),
            )
        )
    return out


@dataclass
class ScalingResult:
    """Error-vs-delta fit of one method."""
    method: str
    slope: float
    mean_errors: list[tuple[float, float]]
    best_betas: Optional[list[float]] = None
    records: list[SweepRecord] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "slope": self.slope,
            "mean_errors": [{"delta": d, "mean_error": e} for d, e in self.mean_errors],
            "best_betas": self.best_betas,
        }


def run_delta_scaling(
    problem: BilevelProblem,
    theta,
    method: str,
    deltas: Sequence[float],
    seeds: Seeds = 20,
    master_seed: int = 0,
    betas: Sequence[float] = DEFAULT_SCALING_BETAS,
    cg_tol: float = 1e-14,
    cg_max_iters: Optional[int] = None,
    rbp_k: int = 20000,
    threads: int = 1,
) -> ScalingResult:
    """
    Log-log slope of mean gradient error against the injected error norm.

    cg and rbp run on a free equilibrium perturbed by delta. ep_opt_beta
    perturbs both phases by delta, evaluates every beta of the grid on the
    same directions and keeps, per delta, the beta with the lowest mean error.

    Args:
        problem: Bilevel problem (strongly convex)
        theta: Outer parameters
        method: cg, rbp or ep_opt_beta
        deltas: Injected error norms, ideally spanning two decades or more
        seeds: Direction seeds per delta (count or values)
        master_seed: Seed mixed into every cell
        betas: Beta grid for ep_opt_beta
        cg_tol: Relative CG tolerance
        cg_max_iters: CG iteration cap; None uses 10 |phi| + 100
        rbp_k: RBP iteration cap
        threads: Worker threads

    Raises:
        ConfigError: Unknown method
        InsufficientPoints: Fewer than 3 usable deltas, or all deltas equal
    """
    if method not in SCALING_METHODS:
        raise ConfigError(f"Unknown scaling method '{method}' (expected one of {', '.join(SCALING_METHODS)})")
    seed_values = _seed_list(seeds)
    deltas = [float(d) for d in deltas]
    positive = [d for d in deltas if d > 0]
    if positive and max(positive) / min(positive) < 100:
        logger.warning("Delta grid spans less than two decades; the slope will be noisy")

    n_phi = problem.dims()[0]
    use_ep = method == "ep_opt_beta"
    ref = solve_reference(problem, theta, betas if use_ep else ())
    max_iters = cg_max_iters if cg_max_iters is not None else 10 * n_phi + 100
    logger.info(f"Delta scaling ({method}) on {problem!r}: {len(deltas)} deltas x {len(seed_values)} seeds")

    def cell(key: tuple[int, int]) -> list[SweepRecord]:
        di, seed = key
        delta = deltas[di]
        s0, s1 = direction_seeds(master_seed, di, seed)
        if not use_ep:
            try:
                phi_hat = inject_error(ref.phi0, delta, s0)
                if method == "cg":
                    est = conjugate_gradient(problem, phi_hat, ref.theta, max_iters=max_iters, tol=cg_tol)
                else:
                    est = rbp_neumann(problem, phi_hat, ref.theta, k=rbp_k, tol=1e-15)
                error = float(np.linalg.norm(est.grad - ref.oracle))
            except BilevelError as e:
                logger.warning(f"Scaling cell delta={delta:g} seed={seed} failed: {e}")
                return [SweepRecord.failed(method, None, delta, 0.0, seed, e)]
            return [SweepRecord(method, None, delta, 0.0, seed, error)]

        out = []
        for i, beta in enumerate(ref.betas):
            if i in ref.failures:
                out.append(SweepRecord.failed(method, beta, delta, delta, seed, ref.failures[i]))
                continue
            try:
                phi0 = inject_error(ref.phi0, delta, s0)
                phi_beta = inject_error(ref.phi_betas[i], delta, s1)
                error = float(np.linalg.norm(ep_two_point(problem, ref.theta, phi0, phi_beta, beta) - ref.oracle))
            except BilevelError as e:
                out.append(SweepRecord.failed(method, beta, delta, delta, seed, e))
                continue
            out.append(SweepRecord(method, beta, delta, delta, seed, error))
        return out

    keys = [(di, s) for di in range(len(deltas)) for s in seed_values]
    records = [r for group in ordered_map(cell, keys, threads) for r in group]

    mean_errors: list[tuple[float, float]] = []
    best_betas: Optional[list[float]] = [] if use_ep else None
    for delta in deltas:
        cell_records = [r for r in records if r.delta == delta and r.ok]
        if not cell_records:
            logger.warning(f"No successful cells at delta={delta:g}; left out of the fit")
            continue
        if use_ep:
            summary = [s for s in summarize_by_beta(cell_records) if s.ok]
            best = min(summary, key=lambda s: s.mean_error)
            best_betas.append(best.beta)
            mean_errors.append((delta, best.mean_error))
        else:
            mean_errors.append((delta, float(np.mean([r.grad_error for r in cell_records]))))

    slope = fit_loglog_slope(mean_errors)
    logger.info(f"Delta scaling ({method}): slope {slope:.4f}")
    return ScalingResult(
        method=method,
        slope=slope,
        mean_errors=mean_errors,
        best_betas=best_betas,
        records=records,
    )
