"""
bilevel/cli.py

Command-line interface for hypergradient estimation and bound experiments.

Usage:
    bilevel estimate --problem p1 --theta 2 --method ep --beta 0.1 --points 2
    bilevel train --config run.json --out results/
    bilevel sweep-beta --problem quad --delta 1e-3 --delta-prime 1e-3
    bilevel delta-scaling --problem quad --method ep_opt_beta
    bilevel coeffs --points 4 --kind forward
    bilevel check --problem quad --seed 0

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures (including a failed gradient check).
"""

from __future__ import annotations
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional

import click
import numpy as np
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .config import ConfigLoader, ProblemSpec, RunConfig
from .core.linalg import as_vec
from .core.stencil import solve_fd_stencil
from .errors import BilevelError, ConfigError
from .estimators.dispatch import estimate_hypergradient
from .lab.bounds import BOUND_SLACK, BoundConstants, bound_violations
from .lab.constants import estimate_constants
from .lab.records import write_records
from .lab.sweeps import run_beta_sweep, run_delta_scaling, summarize_by_beta
from .problems.base import BilevelProblem, TaskFamily
from .problems.checks import check_gradients
from .problems.registry import build_problem
from .problems.ridge import RidgeHyperopt, ridge_grid_search
from .solver.inner import minimize_inner
from .training import run_bilevel, task_seed

logger = logging.getLogger(__name__)

# log(lambda) range of the ridge grid search
GRID_SEARCH_RANGE = (-10.0, 4.0)
CHECK_TOL = 1e-6


def setup_logging(verbose: int) -> None:
    """Rich handler on stderr for the package logger; stdout stays clean."""
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    root = logging.getLogger("bilevel")
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, show_time=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(level)


class BilevelGroup(click.Group):
    """click group that turns BilevelError into its documented exit code."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except BilevelError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)


def parse_vector(ctx, param, value: Optional[str]) -> Optional[list[float]]:
    """'2' or '1,-0.5,3' -> list of floats."""
    if value is None:
        return None
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got '{value}'")


def parse_params(ctx, param, values: tuple[str, ...]) -> dict:
    """Repeated key=value pairs; values are read as YAML scalars or lists."""
    out = {}
    for item in values:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected key=value, got '{item}'")
        out[key.strip()] = yaml.safe_load(raw)
    return out


def run_options(fn):
    """--config, --out, --seed, --threads and --problem/--param, shared by every run command."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="Run config (.json, .yaml, .yml)"),
        click.option("--out", "out_dir", default=None, help="Output directory (overrides output.dir)"),
        click.option("--seed", type=int, default=None, help="Seed (overrides config)"),
        click.option("--threads", type=int, default=None, help="Worker threads (overrides config)"),
        click.option("--problem", default=None, help="Problem name: p1, quad, ridge, meta_ridge, pcn"),
        click.option("-P", "--param", "params", multiple=True, callback=parse_params,
                     help="Problem parameter key=value (repeatable)"),
        click.option("--theta", default=None, callback=parse_vector,
                     help="Outer parameters, comma-separated"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def load_config(
    config_path: Optional[str],
    out_dir: Optional[str],
    seed: Optional[int],
    threads: Optional[int],
    problem: Optional[str],
    params: dict,
    theta: Optional[list[float]],
) -> RunConfig:
    """Config file (or defaults) with command-line overrides applied."""
    cfg = ConfigLoader().load(config_path) if config_path else RunConfig()
    if problem is not None or params:
        name = problem or cfg.problem.name
        base = dict(cfg.problem.params) if name == cfg.problem.name else {}
        base.update(params)
        cfg = replace(cfg, problem=ProblemSpec(name=name, params=base, seed=cfg.problem.seed))
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    if out_dir is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=out_dir))
    if theta is not None:
        cfg = replace(cfg, outer=replace(cfg.outer, theta0=theta))
    return cfg


def override_estimator(cfg: RunConfig, method=None, beta=None, points=None, kind=None) -> RunConfig:
    estimator = cfg.estimator
    if method is not None:
        estimator = replace(estimator, method=method)
    ep_changes = {k: v for k, v in (("beta", beta), ("points", points), ("kind", kind)) if v is not None}
    if ep_changes:
        ep = replace(estimator.ep, **ep_changes)
        if ep.kind == "symmetric":
            ep = replace(ep, allow_negative_beta=True)
        estimator = replace(estimator, ep=ep)
    return replace(cfg, estimator=estimator)


def single_problem(cfg: RunConfig) -> BilevelProblem:
    """The configured problem; task families contribute one sampled task."""
    problem = build_problem(cfg.problem.name, cfg.problem.params, cfg.problem.seed)
    if isinstance(problem, TaskFamily):
        problem = problem.sample_task(task_seed(cfg.seed, 0, 0))
    return problem


def initial_theta(cfg: RunConfig, problem: BilevelProblem) -> np.ndarray:
    if cfg.outer.theta0 is None:
        return problem.default_theta()
    return as_vec(cfg.outer.theta0, problem.dims()[1], "theta")


def emit_json(data) -> None:
    click.echo(json.dumps(data, indent=2))


def print_table(title: str, columns: list[str], rows: list[list[str]]) -> None:
    table = Table(title=title, show_header=True, header_style="bold cyan")
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*row)
    Console(file=sys.stdout).print(table)


@click.group(cls=BilevelGroup)
@click.option("--json", "output_json", is_flag=True, help="Output as JSON")
@click.option("-v", "--verbose", count=True, help="-v for info logs, -vv for debug logs")
@click.pass_context
def cli(ctx, output_json, verbose):
    """Hypergradient estimators and error-bound experiments for bilevel problems."""
    ctx.ensure_object(dict)
    ctx.obj["json"] = output_json
    setup_logging(verbose)


@cli.command("estimate")
@run_options
@click.option("--method", default=None, help="oracle, first_order, identity, rbp, cg or ep")
@click.option("--beta", type=float, default=None, help="EP nudging step")
@click.option("--points", type=int, default=None, help="EP stencil points")
@click.option("--kind", default=None, help="EP stencil kind: forward or symmetric")
def cmd_estimate(config_path, out_dir, seed, threads, problem, params, theta, method, beta, points, kind):
    """Solve the inner problem once and print one outer-gradient estimate as JSON."""
    cfg = load_config(config_path, out_dir, seed, threads, problem, params, theta)
    cfg = override_estimator(cfg, method, beta, points, kind)
    prob = single_problem(cfg)
    theta_vec = initial_theta(cfg, prob)
    inner = minimize_inner(prob, theta_vec, prob.default_phi(), cfg.solver)
    estimate = estimate_hypergradient(prob, theta_vec, inner.phi_hat, cfg.estimator, cfg.solver)
    result = estimate.to_dict()
    result["theta"] = [float(x) for x in theta_vec]
    result["inner"] = inner.to_dict()
    emit_json(result)


@cli.command("train")
@run_options
@click.option("--method", default=None, help="Estimator")
@click.option("--beta", type=float, default=None, help="EP nudging step")
@click.option("--points", type=int, default=None, help="EP stencil points")
@click.option("--outer-lr", type=float, default=None, help="Outer step size")
@click.option("--outer-steps", type=int, default=None, help="Number of outer steps")
@click.option("--cold-start", is_flag=True, help="Start every inner solve from zero")
@click.option("--grid-search", type=int, default=None,
              help="Also run an N-point log-lambda grid search (ridge only)")
@click.pass_context
def cmd_train(ctx, config_path, out_dir, seed, threads, problem, params, theta,
              method, beta, points, outer_lr, outer_steps, cold_start, grid_search):
    """Run the outer loop; writes trajectory.csv and final_state.json."""
    cfg = load_config(config_path, out_dir, seed, threads, problem, params, theta)
    cfg = override_estimator(cfg, method, beta, points)
    outer_changes = {
        k: v for k, v in (("outer_lr", outer_lr), ("outer_steps", outer_steps)) if v is not None
    }
    if cold_start:
        outer_changes["warm_start"] = False
    if outer_changes:
        cfg = replace(cfg, outer=replace(cfg.outer, **outer_changes))

    prob = build_problem(cfg.problem.name, cfg.problem.params, cfg.problem.seed)
    out = cfg.output.path
    log = run_bilevel(cfg, problem=prob, out_dir=out)
    summary = log.final_state()

    if grid_search is not None:
        if not isinstance(prob, RidgeHyperopt):
            raise ConfigError("--grid-search is only available for the ridge problem")
        if grid_search < 2:
            raise ConfigError(f"--grid-search needs at least 2 points, got {grid_search}")
        result = ridge_grid_search(prob, np.linspace(*GRID_SEARCH_RANGE, grid_search))
        (out / "grid_search.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        summary["grid_search"] = {"best_theta": result.best_theta, "best_loss": result.best_loss}

    if ctx.obj["json"]:
        emit_json(summary)
    else:
        click.echo(f"Steps:            {summary['steps']}")
        click.echo(f"Final theta:      {', '.join(f'{x:.6g}' for x in summary['theta'])}")
        if summary["final_outer_loss"] is not None:
            click.echo(f"Final outer loss: {summary['final_outer_loss']:.6g}")
        if "grid_search" in summary:
            gs = summary["grid_search"]
            click.echo(f"Grid search:      theta={gs['best_theta']:.6g} loss={gs['best_loss']:.6g}")
        click.echo(f"Results in {out}")


@cli.command("sweep-beta")
@run_options
@click.option("--delta", type=float, default=None, help="Free-phase error norm")
@click.option("--delta-prime", default=None,
              help="Nudged-phase error norm, or 'solver' to measure it from real solves")
@click.option("--seeds", type=int, default=None, help="Direction seeds per beta")
@click.option("--bounds", is_flag=True, default=False, help="Estimate constants and attach bound values")
@click.option("--constants", "constants_path", type=click.Path(dir_okay=False), default=None,
              help="Bound constants file (.json, .yaml); implies --bounds and skips estimation")
@click.pass_context
def cmd_sweep_beta(ctx, config_path, out_dir, seed, threads, problem, params, theta,
                   delta, delta_prime, seeds, bounds, constants_path):
    """Two-point EP error over a beta grid; writes sweep_beta.csv."""
    cfg = load_config(config_path, out_dir, seed, threads, problem, params, theta)
    changes = {}
    if delta is not None:
        changes["delta"] = delta
    if delta_prime is not None:
        changes["delta_prime"] = None if delta_prime == "solver" else _delta_prime_value(delta_prime)
    if seeds is not None:
        changes["seeds"] = seeds
    if bounds or constants_path:
        changes["bounds"] = True
    sweep = replace(cfg.sweep, **changes)
    cfg = replace(cfg, sweep=sweep)

    prob = single_problem(cfg)
    theta_vec = initial_theta(cfg, prob)
    constants = None
    if constants_path:
        constants = load_constants(constants_path)
    elif sweep.bounds:
        fit = run_beta_sweep(prob, theta_vec, sweep.betas, 0.0, 0.0, seeds=[0], threads=cfg.threads)
        constants = estimate_constants(prob, theta_vec, sweep.radius, seed=cfg.seed, records=fit)
    records = run_beta_sweep(
        prob,
        theta_vec,
        sweep.betas,
        sweep.delta,
        sweep.delta_prime,
        seeds=sweep.seeds,
        master_seed=cfg.seed,
        threads=cfg.threads,
        constants=constants,
        solver=cfg.solver,
    )
    path = write_records(cfg.output.path / "sweep_beta.csv", records)
    summary = summarize_by_beta(records)
    violations = bound_violations(records) if constants else []

    if ctx.obj["json"]:
        emit_json({
            "csv": str(path),
            "constants": constants.to_dict() if constants else None,
            "summary": [asdict(s) for s in summary],
            "violations": [
                {"beta": r.beta, "seed": r.seed, "grad_error": r.grad_error, "bound_value": r.bound_value}
                for r in violations
            ],
        })
    else:
        print_table(
            f"beta sweep: {prob.name}",
            ["beta", "mean error", "max error", "ok", "failed"],
            [[f"{s.beta:.3e}", f"{s.mean_error:.4e}", f"{s.max_error:.4e}", str(s.ok), str(s.failed)]
             for s in summary],
        )
        if constants:
            click.echo(f"Bound violations: {len(violations)} of {len(records)} records (slack {BOUND_SLACK:g})")
        click.echo(f"Wrote {path}")


def load_constants(path: str) -> BoundConstants:
    """Bound constants from a JSON or YAML file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"Constants file not found: {p}")
    return BoundConstants.from_dict(ConfigLoader().parse(p.read_text(), p.suffix))


def _delta_prime_value(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--delta-prime must be a number or 'solver', got '{text}'") from None


@cli.command("delta-scaling")
@run_options
@click.option("--method", default=None, help="cg, rbp or ep_opt_beta")
@click.option("--seeds", type=int, default=None, help="Direction seeds per delta")
@click.pass_context
def cmd_delta_scaling(ctx, config_path, out_dir, seed, threads, problem, params, theta, method, seeds):
    """Fit the log-log slope of gradient error against injected error."""
    cfg = load_config(config_path, out_dir, seed, threads, problem, params, theta)
    changes = {k: v for k, v in (("method", method), ("seeds", seeds)) if v is not None}
    scaling = replace(cfg.scaling, **changes)
    prob = single_problem(cfg)
    result = run_delta_scaling(
        prob,
        initial_theta(cfg, prob),
        scaling.method,
        scaling.deltas,
        seeds=scaling.seeds,
        master_seed=cfg.seed,
        betas=scaling.betas,
        threads=cfg.threads,
    )
    path = write_records(cfg.output.path / f"delta_scaling_{scaling.method}.csv", result.records)

    if ctx.obj["json"]:
        emit_json({"csv": str(path), **result.to_dict()})
    else:
        rows = []
        for i, (d, e) in enumerate(result.mean_errors):
            beta = f"{result.best_betas[i]:.3e}" if result.best_betas else ""
            rows.append([f"{d:.3e}", f"{e:.4e}", beta])
        print_table(f"delta scaling: {scaling.method}", ["delta", "mean error", "best beta"], rows)
        click.echo(f"Slope: {result.slope:.4f}")
        click.echo(f"Wrote {path}")


@cli.command("coeffs")
@click.option("--points", type=int, required=True, help="Number of stencil points")
@click.option("--kind", default="forward", help="forward or symmetric")
@click.pass_context
def cmd_coeffs(ctx, points, kind):
    """Print finite-difference stencil coefficients."""
    stencil = solve_fd_stencil(points, kind)
    if ctx.obj["json"]:
        data = stencil.to_dict()
        data["exact"] = [str(c) for c in stencil.exact] if stencil.exact is not None else None
        emit_json(data)
    else:
        click.echo(stencil.format_coefficients())


@cli.command("check")
@run_options
@click.option("--h", "step", type=float, default=1e-5, help="Finite-difference step")
@click.option("--tol", type=float, default=CHECK_TOL, help="Largest accepted relative error")
@click.pass_context
def cmd_check(ctx, config_path, out_dir, seed, threads, problem, params, theta, step, tol):
    """Verify every analytic derivative of a problem against finite differences."""
    cfg = load_config(config_path, out_dir, seed, threads, problem, params, theta)
    prob = single_problem(cfg)
    n_phi, _ = prob.dims()
    rng = np.random.default_rng(cfg.seed)
    phi = 0.5 * rng.standard_normal(n_phi)
    theta_vec = initial_theta(cfg, prob)
    if cfg.outer.theta0 is None:
        theta_vec = theta_vec + 0.1 * rng.standard_normal(theta_vec.shape[0])
    report = check_gradients(prob, phi, theta_vec, h=step, seed=cfg.seed)
    passed = report.passed(tol)

    if ctx.obj["json"]:
        emit_json({**report.to_dict(), "tol": tol, "passed": passed})
    else:
        print_table(
            f"gradient check: {prob.name}",
            ["capability", "relative error", ""],
            [[name, f"{err:.3e}", "ok" if err <= tol else "FAIL"] for name, err in report.errors.items()],
        )
        click.echo(f"max rel error: {report.worst:.3e} ({report.worst_name})")
    if not passed:
        click.echo(f"Gradient check failed: {report.worst_name} error {report.worst:.3e} > {tol:g}", err=True)
        ctx.exit(3)


def main():
    """Entry point for CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()
