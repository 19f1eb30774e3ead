"""
Tests for bilevel.problems: analytic derivatives, closed forms, the
predictive-coding energy, task sampling and the registry.

Run with:
    pytest bilevel/problems
"""

import numpy as np
import pytest

from bilevel.core import central_diff_grad, ritz_extremes, solve_spd
from bilevel.errors import ConfigError, DimMismatch, UnknownField
from bilevel.problems import (
    MetaRidge,
    PredictiveCodingNet,
    QuadraticBilevel,
    RidgeHyperopt,
    TargetKind,
    build_problem,
    check_gradients,
    closed_form_solution,
    forward_pass,
    make_regression,
    resolve_params,
    ridge_grid_search,
)


def suite(seed=0):
    return [
        QuadraticBilevel.scalar(),
        QuadraticBilevel.random(6, 3, seed=seed, gamma=0.3),
        RidgeHyperopt.synthetic(seed=seed, n_train=30, n_val=10, n_features=6),
        RidgeHyperopt.synthetic(seed=seed, n_train=30, n_val=10, n_features=4, per_coordinate=True),
        MetaRidge(seed=seed, n_features=4).sample_task(3),
        PredictiveCodingNet.random((2, 3, 1), seed=seed),
    ]


def random_point(problem, rng, scale=0.5):
    n_phi, n_theta = problem.dims()
    return scale * rng.standard_normal(n_phi), scale * rng.standard_normal(n_theta)


# -----------------------------------------------------------------------------
# Derivative checks
# -----------------------------------------------------------------------------

def test_check_gradients_quadratic():
    problem = QuadraticBilevel.random(5, 3, seed=0)
    rng = np.random.default_rng(0)
    phi, theta = random_point(problem, rng)
    report = check_gradients(problem, phi, theta, h=1e-5)
    assert set(report.errors) >= {
        "grad_phi_inner", "grad_theta_inner", "grad_phi_outer",
        "grad_theta_outer", "hvp_inner", "cross_vjp_inner",
    }
    assert report.worst <= 1e-6


def test_check_gradients_zero_problem_at_origin():
    problem = QuadraticBilevel(
        H=np.eye(3), B=np.zeros((3, 2)), c=np.zeros(3), t=np.zeros(3)
    )
    phi, theta = np.zeros(3), np.zeros(2)
    for grad in (
        problem.grad_phi_inner(phi, theta),
        problem.grad_theta_inner(phi, theta),
        problem.grad_phi_outer(phi, theta),
        problem.grad_theta_outer(phi, theta),
    ):
        assert not np.any(grad)
    report = check_gradients(problem, phi, theta)
    assert report.worst <= 1e-10


def test_check_gradients_predictive_coding():
    net = PredictiveCodingNet.random((2, 3, 1), seed=1)
    rng = np.random.default_rng(1)
    phi = rng.standard_normal(net.dims()[0])
    report = check_gradients(net, phi, net.default_theta(), h=1e-5)
    assert report.worst <= 1e-5, report.errors


@pytest.mark.parametrize("index", range(6))
def test_suite_derivatives(index):
    problem = suite()[index]
    rng = np.random.default_rng(10 + index)
    phi, theta = random_point(problem, rng)
    assert check_gradients(problem, phi, theta).worst <= 1e-5


@pytest.mark.parametrize("index", range(6))
def test_hvp_symmetry(index):
    problem = suite()[index]
    rng = np.random.default_rng(20 + index)
    for _ in range(10):
        phi, theta = random_point(problem, rng)
        u = rng.standard_normal(phi.shape[0])
        v = rng.standard_normal(phi.shape[0])
        uhv = u @ problem.hvp_inner(phi, theta, v)
        vhu = v @ problem.hvp_inner(phi, theta, u)
        assert abs(uhv - vhu) <= 1e-8 * max(1.0, abs(uhv))


@pytest.mark.parametrize("index", range(6))
def test_cross_vjp_is_theta_gradient_of_projected_inner_gradient(index):
    problem = suite()[index]
    rng = np.random.default_rng(30 + index)
    phi, theta = random_point(problem, rng)
    v = rng.standard_normal(phi.shape[0])
    numeric = central_diff_grad(lambda t: float(v @ problem.grad_phi_inner(phi, t)), theta)
    analytic = problem.cross_vjp_inner(phi, theta, v)
    assert np.linalg.norm(analytic - numeric) <= 1e-5 * max(1.0, np.linalg.norm(numeric))


def test_default_hvp_outer_matches_analytic():
    problem = QuadraticBilevel.random(4, 2, seed=2)
    rng = np.random.default_rng(2)
    phi, theta = random_point(problem, rng)
    v = rng.standard_normal(4)
    fd = super(QuadraticBilevel, problem).hvp_outer(phi, theta, v)
    np.testing.assert_allclose(fd, problem.hvp_outer(phi, theta, v), atol=1e-8)


def test_augmented_helpers_reduce_to_inner_at_zero_beta():
    problem = QuadraticBilevel.random(4, 2, seed=4)
    rng = np.random.default_rng(4)
    phi, theta = random_point(problem, rng)
    assert problem.augmented_loss(phi, theta, 0.0) == problem.inner_loss(phi, theta)
    np.testing.assert_array_equal(
        problem.grad_phi_augmented(phi, theta, 0.0), problem.grad_phi_inner(phi, theta)
    )
    beta = 0.3
    np.testing.assert_allclose(
        problem.grad_theta_augmented(phi, theta, beta),
        problem.grad_theta_inner(phi, theta) + beta * problem.grad_theta_outer(phi, theta),
    )


# -----------------------------------------------------------------------------
# Quadratic closed forms
# -----------------------------------------------------------------------------

def test_closed_form_scalar():
    phi_star, grad = closed_form_solution(QuadraticBilevel.scalar(), [2.0])
    np.testing.assert_allclose(phi_star, [2.0])
    np.testing.assert_allclose(grad, [2.0])


def test_closed_form_zero_at_outer_optimum():
    problem = QuadraticBilevel.random(5, 3, seed=1)
    theta = np.array([0.2, -0.4, 0.7])
    phi_star, _ = closed_form_solution(problem, theta)
    _, grad = closed_form_solution(problem.with_target(phi_star), theta)
    assert np.linalg.norm(grad) <= 1e-12


def test_closed_form_matches_fd_through_solution():
    problem = QuadraticBilevel.random(5, 3, seed=0, gamma=0.1)
    theta = np.array([0.3, -0.1, 0.5])

    def composite(t):
        phi_star, _ = closed_form_solution(problem, t)
        return problem.outer_loss(phi_star, t)

    _, grad = closed_form_solution(problem, theta)
    np.testing.assert_allclose(grad, central_diff_grad(composite, theta), atol=1e-6)


def test_closed_form_is_stationary():
    problem = QuadraticBilevel.random(8, 4, seed=7)
    theta = np.linspace(-1, 1, 4)
    phi_star, _ = closed_form_solution(problem, theta)
    assert np.linalg.norm(problem.grad_phi_inner(phi_star, theta)) <= 1e-10


def test_quadratic_rejects_bad_shapes():
    with pytest.raises(DimMismatch):
        QuadraticBilevel(H=np.eye(3), B=np.zeros((2, 1)), c=np.zeros(3), t=np.zeros(3))


def test_quadratic_does_not_freeze_caller_arrays():
    H = np.eye(2)
    QuadraticBilevel(H=H, B=np.ones((2, 1)), c=np.zeros(2), t=np.zeros(2))
    H[0, 0] = 3.0


# -----------------------------------------------------------------------------
# Predictive coding
# -----------------------------------------------------------------------------

def test_forward_pass_zero_network():
    net = PredictiveCodingNet(sizes=(2, 3, 1), x=[0.4, -0.2], y=[0.0])
    phi = forward_pass(net, net.x)
    np.testing.assert_array_equal(phi[2:], np.zeros(4))
    assert net.inner_loss(phi, net.default_theta()) == 0.0


def test_forward_pass_single_unit():
    net = PredictiveCodingNet.from_layers([[[1.0]]], [[0.0]], x=[0.5], y=[0.0])
    phi = forward_pass(net, [0.5])
    assert abs(phi[1] - 0.462117) <= 1e-6
    assert net.inner_loss(phi, net.default_theta()) == 0.0


def test_forward_pass_energy_vanishes():
    net = PredictiveCodingNet.random((2, 3, 1), seed=2)
    phi = forward_pass(net, net.x)
    assert net.inner_loss(phi, net.default_theta()) <= 1e-24


def test_forward_pass_dimension_mismatch():
    net = PredictiveCodingNet.random((2, 3, 1), seed=2)
    with pytest.raises(DimMismatch):
        forward_pass(net, [1.0, 2.0, 3.0])


def test_energy_non_negative():
    net = PredictiveCodingNet.random((3, 4, 2), seed=5)
    rng = np.random.default_rng(5)
    theta = net.default_theta()
    for _ in range(1000):
        phi = 2.0 * rng.standard_normal(net.dims()[0])
        assert net.inner_loss(phi, theta) >= 0.0


@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_pcn_curvature_bound_dominates_hessian(beta):
    net = PredictiveCodingNet.random((3, 4, 2), seed=6)
    rng = np.random.default_rng(6)
    theta = net.default_theta()
    n_phi = net.dims()[0]
    for _ in range(20):
        phi = 2.0 * rng.standard_normal(n_phi)
        lo, hi = ritz_extremes(lambda v: net.hvp_augmented(phi, theta, beta, v), n_phi, iters=n_phi)
        assert max(abs(lo), abs(hi)) <= net.curvature_bound(phi, theta, beta)


def test_curvature_bound_defaults_to_none():
    problem = QuadraticBilevel.random(4, 2, seed=0)
    assert problem.curvature_bound(np.zeros(4), np.zeros(2), 0.0) is None


def test_pcn_parameter_layout():
    net = PredictiveCodingNet.random((2, 3, 1), seed=0)
    assert net.dims() == (6, 2 * 3 + 3 + 3 * 1 + 1)
    (W0, b0), (W1, b1) = net.unpack(net.default_theta())
    assert W0.shape == (3, 2) and b0.shape == (3,)
    assert W1.shape == (1, 3) and b1.shape == (1,)


# -----------------------------------------------------------------------------
# Ridge and meta-ridge
# -----------------------------------------------------------------------------

def test_sinusoid_targets_share_design_with_linear():
    w = np.array([1.0, -2.0, 0.5])
    sin_train, sin_val, _ = make_regression(30, 10, 3, seed=4, noise=0.0, target="sinusoid", weights=w)
    lin_train, lin_val, _ = make_regression(30, 10, 3, seed=4, noise=0.0, target=TargetKind.LINEAR, weights=w)
    np.testing.assert_array_equal(sin_train.X, lin_train.X)
    np.testing.assert_allclose(sin_train.y, np.sin(lin_train.y))
    np.testing.assert_allclose(sin_val.y, np.sin(lin_val.y))
    assert np.max(np.abs(sin_train.y)) <= 1.0


def test_sinusoid_ridge_from_registry():
    sin = build_problem("ridge", {"target": "sinusoid", "weight_scale": 1.0}, seed=3)
    again = build_problem("ridge", {"target": "sinusoid", "weight_scale": 1.0}, seed=3)
    lin = build_problem("ridge", {"weight_scale": 1.0}, seed=3)
    np.testing.assert_array_equal(sin.val.y, again.val.y)
    np.testing.assert_array_equal(sin.train.X, lin.train.X)
    assert not np.allclose(sin.train.y, lin.train.y)
    theta = np.array([-1.0])
    zero = sin.default_phi()
    hessian = np.column_stack([sin.hvp_inner(zero, theta, e) for e in np.eye(zero.shape[0])])
    phi = solve_spd(hessian, -sin.grad_phi_inner(zero, theta))
    assert np.linalg.norm(sin.grad_phi_inner(phi, theta)) <= 1e-10


def test_unknown_target_kind():
    with pytest.raises(ConfigError):
        make_regression(5, 5, 2, seed=0, target="cubic")


def test_ridge_strong_convexity():
    problem = RidgeHyperopt.synthetic(seed=3, n_features=8, per_coordinate=True)
    theta = np.linspace(-2.0, 1.0, 8)
    phi = np.zeros(8)
    lo, _ = ritz_extremes(lambda v: problem.hvp_inner(phi, theta, v), 8, iters=50)
    assert lo >= np.exp(theta).min() - 1e-8


def test_ridge_exact_inner_solution_is_stationary():
    problem = RidgeHyperopt.synthetic(seed=1)
    theta = np.array([-1.5])
    phi = problem.solve_inner_exact(theta)
    assert np.linalg.norm(problem.grad_phi_inner(phi, theta)) <= 1e-10


def test_ridge_grid_search_picks_minimum():
    problem = RidgeHyperopt.synthetic(seed=0)
    result = ridge_grid_search(problem, np.linspace(-8, 4, 25))
    assert result.best_loss == min(result.losses)
    assert result.grid[result.losses.index(result.best_loss)] == result.best_theta


def test_sample_task_deterministic():
    family = MetaRidge(seed=4)
    a = family.sample_task(7)
    b = family.sample_task(7)
    np.testing.assert_array_equal(a.train.X, b.train.X)
    np.testing.assert_array_equal(a.train.y, b.train.y)
    np.testing.assert_array_equal(a.val.y, b.val.y)
    assert not np.array_equal(a.train.X, family.sample_task(8).train.X)


def test_sampled_tasks_pass_gradient_check():
    family = MetaRidge(seed=0, n_features=3, n_train=8, n_val=4)
    rng = np.random.default_rng(0)
    for seed in range(100):
        task = family.sample_task(seed)
        phi, theta = random_point(task, rng)
        assert check_gradients(task, phi, theta, probes=1).worst <= 1e-5


def test_large_penalty_pins_inner_solution_to_center():
    family = MetaRidge(seed=1)
    task = family.sample_task(0)
    w0 = np.linspace(-1.0, 1.0, family.n_features)
    theta = np.concatenate([[20.0], w0])
    hessian = np.column_stack(
        [task.hvp_inner(w0, theta, e) for e in np.eye(family.n_features)]
    )
    rhs = hessian @ w0 - task.grad_phi_inner(w0, theta)
    phi_star = solve_spd(0.5 * (hessian + hessian.T), rhs)
    assert np.linalg.norm(phi_star - w0) <= 1e-6


def test_sample_task_accepts_negative_seed():
    task = MetaRidge(seed=0).sample_task(-3)
    assert task.dims() == (5, 6)


# -----------------------------------------------------------------------------
# Registry
# -----------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["p1", "quad", "ridge", "meta_ridge", "pcn"])
def test_build_problem_defaults(name):
    problem = build_problem(name, {}, seed=0)
    assert problem.dims()[0] >= 1


def test_build_problem_rejects_unknown_param():
    with pytest.raises(UnknownField) as err:
        build_problem("quad", {"n_phy": 4})
    assert err.value.path == "problem.params.n_phy"


def test_build_problem_rejects_unknown_name():
    with pytest.raises(UnknownField):
        build_problem("gan", {})


def test_build_problem_rejects_bad_values():
    with pytest.raises(ConfigError):
        build_problem("pcn", {"sizes": 3})


def test_resolve_params_fills_defaults():
    params = resolve_params("quad", {"n_phi": 8})
    assert params == {"n_phi": 8, "n_theta": 3, "gamma": 0.0}
