"""
Outer training loop.

Each step solves the inner problem at the current theta, estimates the outer
gradient with the configured estimator and takes a plain gradient step:

    phi_hat <- inner solve at theta (warm-started from the previous phi_hat)
    grad    <- estimator(phi_hat, theta)
    theta   <- theta - outer_lr * grad

Meta-learning families average the gradient over tasks_per_step tasks, each
solved independently from the cold start.
"""

from __future__ import annotations
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .config import RunConfig
from .core.linalg import Vec, as_vec
from .core.parallel import ordered_map
from .errors import BilevelError, NonFiniteEval, OuterStepError
from .estimators.dispatch import estimate_hypergradient
from .problems.base import BilevelProblem, TaskFamily
from .problems.meta import task_seed_sequence
from .problems.registry import build_problem
from .solver.inner import minimize_inner

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("step", "outer_loss", "grad_norm", "inner_iters", "phase2_iters", "hvp_count")
TRAJECTORY_FILE = "trajectory.csv"
FINAL_STATE_FILE = "final_state.json"


@dataclass(frozen=True)
class TrajectoryStep:
    """
    One outer step. Counters are summed over tasks for meta-learning runs;
    outer_loss is their mean.
    """
    step: int
    outer_loss: float
    grad_norm: float
    inner_iters: int
    phase2_iters: int
    hvp_count: int

    def to_csv_row(self) -> list[str]:
        return [
            str(self.step),
            format(self.outer_loss, ".17g"),
            format(self.grad_norm, ".17g"),
            str(self.inner_iters),
            str(self.phase2_iters),
            str(self.hvp_count),
        ]


@dataclass
class TrajectoryLog:
    """Steps of one run plus the final outer parameters."""
    theta0: Vec
    theta: Vec
    steps: list[TrajectoryStep] = field(default_factory=list)
    final_outer_loss: Optional[float] = None
    failed_step: Optional[int] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failed_step is not None

    @property
    def outer_losses(self) -> list[float]:
        return [s.outer_loss for s in self.steps]

    def write_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRAJECTORY_HEADER)
            for s in self.steps:
                writer.writerow(s.to_csv_row())
        return path

    def final_state(self, cfg: Optional[RunConfig] = None) -> dict:
        state = {
            "theta0": [float(x) for x in self.theta0],
            "theta": [float(x) for x in self.theta],
            "steps": len(self.steps),
            "final_outer_loss": self.final_outer_loss,
            "failed_step": self.failed_step,
            "error": self.error,
        }
        if cfg is not None:
            state["config"] = cfg.to_dict()
        return state

    def write(self, out_dir: Path | str, cfg: Optional[RunConfig] = None) -> tuple[Path, Path]:
        """Write trajectory.csv and final_state.json into out_dir."""
        out_dir = Path(out_dir)
        csv_path = self.write_csv(out_dir / TRAJECTORY_FILE)
        json_path = out_dir / FINAL_STATE_FILE
        json_path.write_text(json.dumps(self.final_state(cfg), indent=2) + "\n")
        logger.info(f"Wrote {csv_path} and {json_path}")
        return csv_path, json_path


@dataclass
class _TaskResult:
    grad: Vec
    outer_loss: float
    inner_iters: int
    phase2_iters: int
    hvp_count: int
    phi_hat: Vec


def _task_step(problem: BilevelProblem, theta: Vec, phi_start: Vec, cfg: RunConfig) -> _TaskResult:
    inner = minimize_inner(problem, theta, phi_start, cfg.solver)
    estimate = estimate_hypergradient(problem, theta, inner.phi_hat, cfg.estimator, cfg.solver)
    return _TaskResult(
        grad=estimate.grad,
        outer_loss=float(problem.outer_loss(inner.phi_hat, theta)),
        inner_iters=inner.iters,
        phase2_iters=estimate.phase2_iters,
        hvp_count=estimate.hvp_count,
        phi_hat=inner.phi_hat,
    )


def task_seed(run_seed: int, step: int, task: int) -> int:
    """Seed of the task-th task sampled at an outer step."""
    return int(task_seed_sequence(run_seed, step, task).generate_state(1)[0])


def _failed(
    log: TrajectoryLog, step: int, error: BilevelError, cfg: RunConfig, out_dir: Optional[Path | str]
) -> OuterStepError:
    """Record the failure on log, write partial outputs, and wrap the error."""
    log.failed_step = step
    log.error = f"{type(error).__name__}: {error}"
    logger.error(f"Outer step {step} failed: {error}")
    if out_dir is not None:
        log.write(out_dir, cfg)
    return OuterStepError(step, error)


def run_bilevel(
    cfg: RunConfig,
    problem: Optional[Union[BilevelProblem, TaskFamily]] = None,
    out_dir: Optional[Path | str] = None,
) -> TrajectoryLog:
    """
    Run the outer loop described by cfg.

    Args:
        cfg: Validated run configuration
        problem: Problem to train; None builds cfg.problem from the registry
        out_dir: When given, trajectory.csv and final_state.json are written
            there, also for a run that fails part-way

    Returns:
        TrajectoryLog with one entry per completed step

    Raises:
        OuterStepError: A solver or estimator error inside a step, or in the
            final inner solve (step = number of completed steps); carries the
            step index and the exit code of the underlying error
    """
    if problem is None:
        problem = build_problem(cfg.problem.name, cfg.problem.params, cfg.problem.seed)
    n_phi, n_theta = problem.dims()
    theta = problem.default_theta() if cfg.outer.theta0 is None else as_vec(cfg.outer.theta0, n_theta, "outer.theta0")
    theta = np.array(theta, dtype=np.float64)
    log = TrajectoryLog(theta0=theta.copy(), theta=theta.copy())
    is_family = isinstance(problem, TaskFamily)
    phi = problem.default_phi()
    logger.info(
        f"Training {problem!r} with {cfg.estimator.method} for {cfg.outer.outer_steps} steps "
        f"(lr={cfg.outer.outer_lr:g})"
    )

    for step in range(cfg.outer.outer_steps):
        try:
            if is_family:
                tasks = [problem.sample_task(task_seed(cfg.seed, step, t)) for t in range(cfg.outer.tasks_per_step)]
                results = ordered_map(
                    lambda task: _task_step(task, theta, task.default_phi(), cfg), tasks, cfg.threads
                )
            else:
                start = phi if cfg.outer.warm_start else problem.default_phi()
                results = [_task_step(problem, theta, start, cfg)]
                phi = results[0].phi_hat

            grad = np.mean([r.grad for r in results], axis=0)
            outer_loss = float(np.mean([r.outer_loss for r in results]))
            grad_norm = float(np.linalg.norm(grad))
            if not (np.all(np.isfinite(grad)) and np.isfinite(outer_loss)):
                raise NonFiniteEval(f"Non-finite outer gradient or loss (|grad|={grad_norm}, loss={outer_loss})")
        except BilevelError as e:
            raise _failed(log, step, e, cfg, out_dir) from e

        log.steps.append(
            TrajectoryStep(
                step=step,
                outer_loss=outer_loss,
                grad_norm=grad_norm,
                inner_iters=sum(r.inner_iters for r in results),
                phase2_iters=sum(r.phase2_iters for r in results),
                hvp_count=sum(r.hvp_count for r in results),
            )
        )
        theta = theta - cfg.outer.outer_lr * grad
        log.theta = theta.copy()
        logger.debug(f"Step {step}: loss={outer_loss:.6e} |grad|={grad_norm:.3e}")

    if not is_family:
        # Outer loss at the final theta, not at the last visited one
        start = phi if cfg.outer.warm_start else problem.default_phi()
        try:
            final = minimize_inner(problem, theta, start, cfg.solver)
        except BilevelError as e:
            raise _failed(log, len(log.steps), e, cfg, out_dir) from e
        log.final_outer_loss = float(problem.outer_loss(final.phi_hat, theta))
        logger.info(f"Finished {len(log.steps)} steps, final outer loss {log.final_outer_loss:.6e}")
    if out_dir is not None:
        log.write(out_dir, cfg)
    return log
