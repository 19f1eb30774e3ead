"""
Tests for bilevel.estimators: implicit-differentiation estimators,
equilibrium propagation and estimator dispatch.

Run with:
    pytest bilevel/estimators
"""

import numpy as np
import pytest

from bilevel.core import central_diff_grad, fit_loglog_slope, solve_fd_stencil, solve_spd
from bilevel.errors import (
    DimMismatch,
    Diverged,
    IndefiniteDetected,
    NegativeBetaNotEnabled,
    NonPositiveBeta,
    NotSPD,
    PhaseDiverged,
    UnknownField,
)
from bilevel.estimators import (
    EstimatorSpec,
    Method,
    PiVector,
    assemble_gradient,
    conjugate_gradient,
    ep_estimate,
    ep_pi_recover,
    estimate_hypergradient,
    first_order,
    inverse_curvature,
    node_order,
    one_step_identity,
    oracle_exact,
    rbp_neumann,
)
from bilevel.problems import (
    BilevelProblem,
    MetaRidge,
    PredictiveCodingNet,
    QuadraticBilevel,
    RidgeHyperopt,
    closed_form_solution,
    forward_pass,
)
from bilevel.solver import SolverConfig, minimize_augmented, minimize_inner

P1 = QuadraticBilevel.scalar()
EXACT = SolverConfig(grad_tol=1e-13, max_iters=100000)


class ZeroOuter(BilevelProblem):
    """Wraps a problem and replaces its outer loss by zero."""

    name = "zero_outer"

    def __init__(self, inner: BilevelProblem):
        self.inner = inner

    def dims(self):
        return self.inner.dims()

    def inner_loss(self, phi, theta):
        return self.inner.inner_loss(phi, theta)

    def outer_loss(self, phi, theta):
        return 0.0

    def grad_phi_inner(self, phi, theta):
        return self.inner.grad_phi_inner(phi, theta)

    def grad_theta_inner(self, phi, theta):
        return self.inner.grad_theta_inner(phi, theta)

    def grad_phi_outer(self, phi, theta):
        return np.zeros(self.dims()[0])

    def grad_theta_outer(self, phi, theta):
        return np.zeros(self.dims()[1])

    def hvp_inner(self, phi, theta, v):
        return self.inner.hvp_inner(phi, theta, v)

    def hvp_outer(self, phi, theta, v):
        return np.zeros(self.dims()[0])

    def cross_vjp_inner(self, phi, theta, v):
        return self.inner.cross_vjp_inner(phi, theta, v)


def diag_problem(diag, t, n_theta=None):
    n = len(diag)
    n_theta = n if n_theta is None else n_theta
    return QuadraticBilevel(
        H=np.diag(diag), B=np.eye(n, n_theta), c=np.zeros(n), t=np.asarray(t, dtype=float)
    )


def solved(problem, theta, phi0=None, cfg=EXACT):
    phi0 = problem.default_phi() if phi0 is None else phi0
    report = minimize_inner(problem, theta, phi0, cfg)
    assert report.converged
    return report.phi_hat


# -----------------------------------------------------------------------------
# Oracle, first order, identity
# -----------------------------------------------------------------------------

def test_oracle_scalar():
    est = oracle_exact(P1, [2.0], [2.0])
    np.testing.assert_allclose(est.grad, [2.0])
    assert est.method is Method.ORACLE
    assert est.hvp_count == 1


def test_oracle_zero_at_outer_optimum():
    problem = QuadraticBilevel.random(6, 3, seed=2)
    theta = np.array([0.4, -0.3, 0.1])
    phi_star, _ = closed_form_solution(problem, theta)
    est = oracle_exact(problem.with_target(phi_star), phi_star, theta)
    assert np.linalg.norm(est.grad) <= 1e-9


def test_oracle_matches_fd_through_solution():
    problem = QuadraticBilevel.random(8, 4, seed=3)
    theta = np.array([0.5, -1.0, 0.25, 0.0])
    phi_star, _ = closed_form_solution(problem, theta)

    def composite(t):
        return problem.outer_loss(closed_form_solution(problem, t)[0], t)

    est = oracle_exact(problem, phi_star, theta)
    np.testing.assert_allclose(est.grad, central_diff_grad(composite, theta), atol=1e-6)
    assert est.hvp_count == 8


QUAD_SIZES = [(5, 1), (6, 8), (8, 2), (10, 3), (12, 5), (14, 4), (15, 6), (17, 7), (19, 3), (20, 8)]


def random_quadratic(index):
    n_phi, n_theta = QUAD_SIZES[index]
    problem = QuadraticBilevel.random(n_phi, n_theta, seed=100 + index)
    theta = 0.5 * np.random.default_rng(100 + index).standard_normal(n_theta)
    return problem, theta


@pytest.mark.parametrize("index", range(len(QUAD_SIZES)))
def test_oracle_matches_fd_on_random_quadratics(index):
    problem, theta = random_quadratic(index)

    def composite(t):
        return problem.outer_loss(closed_form_solution(problem, t)[0], t)

    phi_star, _ = closed_form_solution(problem, theta)
    est = oracle_exact(problem, phi_star, theta).grad
    fd = central_diff_grad(composite, theta)
    assert np.linalg.norm(est - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


@pytest.mark.parametrize("index", range(len(QUAD_SIZES)))
def test_estimators_converge_to_oracle_on_random_quadratics(index):
    problem, theta = random_quadratic(index)
    n_phi = problem.dims()[0]
    phi_hat = solved(problem, theta, np.zeros(n_phi), SolverConfig(grad_tol=1e-12, max_iters=200000))
    oracle = oracle_exact(problem, phi_hat, theta).grad
    cg = conjugate_gradient(problem, phi_hat, theta, tol=1e-12).grad
    rbp = rbp_neumann(
        problem, phi_hat, theta, alpha=inverse_curvature(problem, phi_hat, theta), k=5000
    ).grad
    ep = ep_estimate(
        problem, theta, phi_hat, solve_fd_stencil(2).with_step(1e-4),
        SolverConfig(grad_tol=1e-12, max_iters=200000),
    ).grad
    np.testing.assert_allclose(cg, oracle, atol=1e-7)
    np.testing.assert_allclose(rbp, oracle, atol=1e-7)
    np.testing.assert_allclose(ep, oracle, atol=1e-3)


class SkewedHessian(QuadraticBilevel):
    """Quadratic whose hvp_inner carries a skew-symmetric error."""

    def hvp_inner(self, phi, theta, v):
        v = np.asarray(v, dtype=np.float64)
        skew = np.zeros_like(v)
        skew[0], skew[1] = 0.1 * v[1], -0.1 * v[0]
        return super().hvp_inner(phi, theta, v) + skew


def test_oracle_rejects_asymmetric_hessian():
    base = QuadraticBilevel.random(4, 2, seed=5)
    problem = SkewedHessian(H=base.H, B=base.B, c=base.c, t=base.t)
    with pytest.raises(NotSPD, match="not symmetric"):
        oracle_exact(problem, np.zeros(4), np.zeros(2))


def test_oracle_tolerates_round_off_asymmetry():
    problem = RidgeHyperopt.synthetic(seed=4, n_features=6)
    theta = np.array([-1.0])
    est = oracle_exact(problem, problem.default_phi(), theta)
    assert est.residual <= 1e-10


def test_oracle_rejects_indefinite_hessian():
    problem = diag_problem([1.0, -1.0], [0.0, 0.0])
    with pytest.raises(NotSPD):
        oracle_exact(problem, [0.0, 0.0], [0.0, 0.0])


def test_first_order_scalar_is_biased():
    est = first_order(P1, [2.0], [2.0])
    np.testing.assert_array_equal(est.grad, [0.0])
    assert est.hvp_count == 0 and est.inner_solve_count == 0


def test_first_order_ridge_is_zero():
    problem = RidgeHyperopt.synthetic(seed=0, n_features=4)
    est = first_order(problem, np.ones(4), [0.3])
    np.testing.assert_array_equal(est.grad, [0.0])


def test_first_order_direct_term():
    problem = QuadraticBilevel.random(4, 3, seed=1, gamma=0.5)
    theta = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(first_order(problem, np.zeros(4), theta).grad, 0.5 * theta)


def test_identity_exact_for_unit_hessian():
    np.testing.assert_allclose(one_step_identity(P1, [2.0], [2.0]).grad, [2.0])


def test_identity_reduces_to_first_order_when_outer_gradient_vanishes():
    problem = QuadraticBilevel.random(4, 2, seed=4, gamma=0.2)
    phi = problem.t.copy()
    theta = np.array([0.3, 0.7])
    np.testing.assert_allclose(
        one_step_identity(problem, phi, theta).grad, first_order(problem, phi, theta).grad
    )


def test_identity_error_on_doubled_hessian():
    rng = np.random.default_rng(0)
    problem = QuadraticBilevel(
        H=2.0 * np.eye(3), B=rng.standard_normal((3, 2)), c=np.zeros(3),
        t=rng.standard_normal(3), gamma=0.1,
    )
    theta = np.array([0.5, -0.5])
    phi_star, _ = closed_form_solution(problem, theta)
    direct = first_order(problem, phi_star, theta).grad
    oracle = oracle_exact(problem, phi_star, theta).grad
    identity = one_step_identity(problem, phi_star, theta).grad
    assert np.linalg.norm(identity - oracle) > 1e-6
    np.testing.assert_allclose(identity - direct, 2.0 * (oracle - direct), atol=1e-12)
    np.testing.assert_allclose(identity - oracle, (identity - direct) * (1 - 0.5), atol=1e-12)


# -----------------------------------------------------------------------------
# Recurrent backpropagation
# -----------------------------------------------------------------------------

def test_rbp_single_step_exact_on_unit_hessian():
    est = rbp_neumann(P1, [2.0], [2.0], alpha=1.0, k=1)
    np.testing.assert_allclose(est.pi, [2.0])
    np.testing.assert_allclose(est.grad, [2.0])
    assert est.hvp_count == 1 == est.phase2_iters


def test_rbp_zero_steps_is_first_order():
    problem = QuadraticBilevel.random(5, 2, seed=5, gamma=0.3)
    theta = np.array([0.2, 0.4])
    phi = np.ones(5)
    est = rbp_neumann(problem, phi, theta, alpha=0.1, k=0)
    np.testing.assert_array_equal(est.grad, first_order(problem, phi, theta).grad)
    assert est.hvp_count == 0


def test_rbp_geometric_limit():
    problem = diag_problem([1.0, 2.0], [-1.0, -1.0])
    est = rbp_neumann(problem, [0.0, 0.0], [0.0, 0.0], alpha=0.4, k=60)
    np.testing.assert_allclose(est.pi, [1.0, 0.5], atol=1e-9)
    np.testing.assert_allclose(est.pi, solve_spd(np.diag([1.0, 2.0]), [1.0, 1.0]), atol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 5, 10])
def test_rbp_equals_neumann_partial_sum(k):
    problem = QuadraticBilevel.random(6, 2, seed=6)
    phi = np.linspace(-1, 1, 6)
    theta = np.array([0.1, 0.2])
    alpha = 0.2
    g = problem.grad_phi_outer(phi, theta)
    m = np.eye(6) - alpha * problem.H
    partial = alpha * sum(np.linalg.matrix_power(m, i) @ g for i in range(k))
    est = rbp_neumann(problem, phi, theta, alpha=alpha, k=k)
    np.testing.assert_allclose(est.pi, partial, atol=1e-10)


def test_rbp_diverges_with_large_step():
    problem = QuadraticBilevel.random(6, 2, seed=7)
    with pytest.raises(Diverged):
        rbp_neumann(problem, np.ones(6), [0.0, 0.0], alpha=10.0, k=10000)


def test_rbp_early_stop_on_small_update():
    est = rbp_neumann(P1, [2.0], [2.0], alpha=0.5, k=1000, tol=1e-8)
    assert est.phase2_iters < 1000
    assert abs(est.grad[0] - 2.0) <= 1e-7


def test_truncation_refines_monotonically():
    problem = diag_problem([1.0, 2.0, 4.0], [0.5, -0.5, 1.0])
    theta = np.array([0.3, 0.1, -0.2])
    phi_star, _ = closed_form_solution(problem, theta)
    oracle = oracle_exact(problem, phi_star, theta).grad
    alpha = inverse_curvature(problem, phi_star, theta)
    err_fo = np.linalg.norm(first_order(problem, phi_star, theta).grad - oracle)
    err_1 = np.linalg.norm(rbp_neumann(problem, phi_star, theta, alpha=alpha, k=1).grad - oracle)
    err_10 = np.linalg.norm(rbp_neumann(problem, phi_star, theta, alpha=alpha, k=10).grad - oracle)
    assert err_fo >= err_1 >= err_10


# -----------------------------------------------------------------------------
# Conjugate gradients and assembly
# -----------------------------------------------------------------------------

def test_cg_identity_hessian_one_iteration():
    problem = QuadraticBilevel(
        H=np.eye(4), B=np.ones((4, 2)), c=np.zeros(4), t=np.array([1.0, 2.0, 3.0, 4.0])
    )
    phi = np.zeros(4)
    est = conjugate_gradient(problem, phi, [0.0, 0.0], max_iters=10, tol=1e-12)
    assert est.phase2_iters == 1
    np.testing.assert_allclose(est.pi, problem.grad_phi_outer(phi, [0.0, 0.0]))


def test_cg_scalar():
    est = conjugate_gradient(P1, [2.0], [2.0])
    np.testing.assert_allclose(est.grad, [2.0])
    assert est.phase2_iters == 1 == est.hvp_count


def test_cg_finite_termination():
    problem = QuadraticBilevel.random(12, 3, seed=5)
    phi = np.random.default_rng(5).standard_normal(12)
    theta = np.zeros(3)
    est = conjugate_gradient(problem, phi, theta, max_iters=12, tol=1e-14)
    assert est.phase2_iters <= 12
    expected = solve_spd(problem.H, problem.grad_phi_outer(phi, theta))
    np.testing.assert_allclose(est.pi, expected, atol=1e-8)
    assert est.diagnostics["relative_residual"] <= est.residual


def test_cg_reports_indefinite_curvature():
    problem = diag_problem([1.0, -1.0], [0.0, -1.0])
    with pytest.raises(IndefiniteDetected) as err:
        conjugate_gradient(problem, [0.0, 0.0], [0.0, 0.0])
    assert err.value.curvature < 0


def test_assemble_gradient():
    problem = QuadraticBilevel.random(5, 2, seed=8, gamma=0.2)
    theta = np.array([0.1, -0.1])
    phi = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(
        assemble_gradient(problem, phi, theta, np.zeros(5)), first_order(problem, phi, theta).grad
    )
    pi = solve_spd(problem.H, problem.grad_phi_outer(phi, theta))
    np.testing.assert_allclose(
        assemble_gradient(problem, phi, theta, PiVector(pi)),
        oracle_exact(problem, phi, theta).grad,
        atol=1e-10,
    )
    np.testing.assert_allclose(assemble_gradient(P1, [2.0], [2.0], [2.0]), [2.0])
    with pytest.raises(DimMismatch):
        assemble_gradient(problem, phi, theta, np.zeros(4))


def test_pi_vector_residual():
    problem = QuadraticBilevel.random(5, 2, seed=9)
    phi = np.ones(5)
    est = conjugate_gradient(problem, phi, [0.0, 0.0], tol=1e-12)
    g = problem.grad_phi_outer(phi, [0.0, 0.0])
    assert PiVector(est.pi).residual(lambda v: problem.H @ v, g) <= 1e-10


# -----------------------------------------------------------------------------
# Equilibrium propagation
# -----------------------------------------------------------------------------

def test_ep_two_point_scalar():
    stencil = solve_fd_stencil(2).with_step(0.1)
    est = ep_estimate(P1, [1.0], [1.0], stencil, EXACT)
    assert abs(est.grad[0] - 1.0 / 1.1) <= 1e-10
    assert est.inner_solve_count == 1
    assert est.hvp_count == 0
    assert est.beta == 0.1


def test_ep_symmetric_scalar():
    stencil = solve_fd_stencil(3, "symmetric").with_step(0.1)
    est = ep_estimate(P1, [1.0], [1.0], stencil, EXACT, allow_negative_beta=True)
    assert abs(est.grad[0] - 1.0 / (1.0 - 0.01)) <= 1e-10
    assert est.inner_solve_count == 2


def test_ep_symmetric_requires_opt_in():
    stencil = solve_fd_stencil(3, "symmetric").with_step(0.1)
    with pytest.raises(NegativeBetaNotEnabled):
        ep_estimate(P1, [1.0], [1.0], stencil, EXACT)


def test_ep_requires_step():
    with pytest.raises(NonPositiveBeta):
        ep_estimate(P1, [1.0], [1.0], solve_fd_stencil(2), EXACT)


def test_ep_null_outer_loss_gives_zero():
    problem = ZeroOuter(QuadraticBilevel.random(5, 2, seed=1))
    theta = np.array([0.5, -0.5])
    phi0 = solved(problem, theta)
    for points in (2, 3, 4):
        est = ep_estimate(problem, theta, phi0, solve_fd_stencil(points).with_step(0.1), EXACT)
        np.testing.assert_allclose(est.grad, np.zeros(2), atol=1e-12)


def test_ep_phase_divergence_names_node():
    stencil = solve_fd_stencil(3, "symmetric").with_step(2.0)
    with pytest.raises(PhaseDiverged) as err:
        ep_estimate(P1, [1.0], [1.0], stencil, SolverConfig(max_iters=5000), allow_negative_beta=True)
    assert err.value.node == -1
    assert err.value.beta == -2.0


def test_ep_cold_start_agrees_with_warm_start():
    problem = QuadraticBilevel.random(6, 2, seed=11)
    theta = np.array([0.2, 0.8])
    phi0 = solved(problem, theta)
    stencil = solve_fd_stencil(3).with_step(0.01)
    warm = ep_estimate(problem, theta, phi0, stencil, EXACT)
    cold = ep_estimate(problem, theta, phi0, stencil, EXACT, warm_start=False)
    np.testing.assert_allclose(warm.grad, cold.grad, atol=1e-8)
    assert warm.phase2_iters <= cold.phase2_iters


def test_node_order():
    assert node_order((0, 1, 2, 3)) == [0, 1, 2, 3]
    assert node_order((-1, 0, 1)) == [0, -1, 1]


def _p1_ep_errors(points, kind, betas):
    errors = []
    for beta in betas:
        stencil = solve_fd_stencil(points, kind).with_step(beta)
        est = ep_estimate(P1, [1.0], [1.0], stencil, EXACT, allow_negative_beta=True)
        errors.append(abs(est.grad[0] - 1.0))
    return errors


@pytest.mark.parametrize(
    "points,kind,low,high",
    [
        (2, "forward", 0.9, 1.1),
        (3, "symmetric", 1.85, 2.15),
        (3, "forward", 1.85, 2.15),
        (4, "forward", 2.7, 3.3),
    ],
)
def test_ep_convergence_order_scalar(points, kind, low, high):
    betas = np.logspace(-3, -1, 7)
    slope = fit_loglog_slope(zip(betas, _p1_ep_errors(points, kind, betas)))
    assert low <= slope <= high


@pytest.mark.parametrize("points,low,high", [(2, 0.9, 1.1), (3, 1.85, 2.15)])
def test_ep_convergence_order_quadratic(points, low, high):
    problem = QuadraticBilevel.random(5, 2, seed=0)
    theta = np.array([0.7, -0.4])
    phi_star, exact = closed_form_solution(problem, theta)
    betas = np.logspace(-3, -1.5, 7)
    errors = []
    for beta in betas:
        est = ep_estimate(problem, theta, phi_star, solve_fd_stencil(points).with_step(beta), EXACT)
        errors.append(np.linalg.norm(est.grad - exact))
    assert low <= fit_loglog_slope(zip(betas, errors)) <= high


def test_ep_pi_recover_scalar():
    phi_beta = minimize_augmented(P1, [1.0], 0.01, [1.0], EXACT).phi_hat
    pi = ep_pi_recover(P1, [1.0], [1.0], phi_beta, 0.01)
    assert abs(pi.pi[0] - (1.0 - 1.0 / 1.01) / 0.01) <= 1e-9
    assert abs(pi.pi[0] - 1.0) <= 0.011


def test_ep_pi_recover_null_outer():
    problem = ZeroOuter(QuadraticBilevel.random(4, 2, seed=2))
    theta = np.zeros(2)
    phi0 = solved(problem, theta)
    phi_beta = minimize_augmented(problem, theta, 0.1, phi0, EXACT).phi_hat
    np.testing.assert_allclose(ep_pi_recover(problem, theta, phi0, phi_beta, 0.1).pi, 0.0, atol=1e-12)


def test_ep_pi_recover_bias_shrinks_with_beta():
    problem = QuadraticBilevel.random(5, 3, seed=0)
    theta = np.array([0.3, -0.2, 0.5])
    phi0, _ = closed_form_solution(problem, theta)
    pi_star = conjugate_gradient(problem, phi0, theta, tol=1e-14).pi
    gaps = []
    for beta in (1e-2, 1e-3):
        phi_beta = minimize_augmented(problem, theta, beta, phi0, EXACT).phi_hat
        gaps.append(np.linalg.norm(ep_pi_recover(problem, theta, phi0, phi_beta, beta).pi - pi_star))
    assert 5.0 <= gaps[0] / gaps[1] <= 20.0


def test_ep_pi_recover_validates():
    with pytest.raises(DimMismatch):
        ep_pi_recover(P1, [1.0], [1.0, 2.0], [1.0], 0.1)
    with pytest.raises(NonPositiveBeta):
        ep_pi_recover(P1, [1.0], [1.0], [1.0], 0.0)


# -----------------------------------------------------------------------------
# Cross-method agreement
# -----------------------------------------------------------------------------

def _suite():
    pcn = PredictiveCodingNet.random((2, 3, 1), seed=3)
    meta = MetaRidge(seed=2, n_features=4)
    rng = np.random.default_rng(12)
    return [
        (QuadraticBilevel.random(10, 4, seed=3), 0.5 * rng.standard_normal(4), None),
        (RidgeHyperopt.synthetic(seed=1, n_features=6), np.array([-1.0]), None),
        (
            RidgeHyperopt.synthetic(seed=2, n_features=4, per_coordinate=True),
            np.array([-1.0, 0.0, -2.0, 0.5]),
            None,
        ),
        (meta.sample_task(0), np.concatenate([[0.0], 0.5 * rng.standard_normal(4)]), None),
        (pcn, pcn.default_theta(), forward_pass(pcn, pcn.x)),
    ]


@pytest.mark.parametrize("index", range(5), ids=["quad", "ridge", "ridge_pc", "meta", "pcn"])
def test_estimators_agree_with_oracle(index):
    problem, theta, phi0 = _suite()[index]
    phi_hat = solved(problem, theta, phi0, SolverConfig(grad_tol=1e-12, max_iters=200000))
    oracle = oracle_exact(problem, phi_hat, theta).grad
    cg = conjugate_gradient(problem, phi_hat, theta, tol=1e-12).grad
    rbp = rbp_neumann(
        problem, phi_hat, theta, alpha=inverse_curvature(problem, phi_hat, theta), k=5000
    ).grad
    ep = ep_estimate(
        problem, theta, phi_hat, solve_fd_stencil(2).with_step(1e-4),
        SolverConfig(grad_tol=1e-12, max_iters=200000),
    ).grad
    np.testing.assert_allclose(cg, oracle, atol=1e-7)
    np.testing.assert_allclose(rbp, oracle, atol=1e-7)
    np.testing.assert_allclose(ep, oracle, atol=1e-3)


@pytest.mark.parametrize("problem", [P1, QuadraticBilevel.random(4, 2, seed=13)], ids=["p1", "quad"])
def test_mixed_derivatives_commute(problem):
    """
    d_theta of d_beta L and d_beta of d_theta L, both through re-solved
    equilibria, agree.
    """
    n_phi, n_theta = problem.dims()
    theta0 = np.linspace(0.5, 1.0, n_theta)
    beta0 = 0.05
    h = 1e-4

    def equilibrium(theta, beta):
        return minimize_augmented(problem, theta, beta, np.zeros(n_phi), EXACT).phi_hat

    def d_beta_loss(theta):
        return problem.outer_loss(equilibrium(theta, beta0), theta)

    def d_theta_loss(beta):
        return problem.grad_theta_augmented(equilibrium(theta0, beta), theta0, beta)

    lhs = central_diff_grad(d_beta_loss, theta0, h)
    rhs = (d_theta_loss(beta0 + h) - d_theta_loss(beta0 - h)) / (2 * h)
    np.testing.assert_allclose(lhs, rhs, atol=1e-4)


# -----------------------------------------------------------------------------
# Dispatch and settings
# -----------------------------------------------------------------------------

@pytest.mark.parametrize("method", [m.value for m in Method])
def test_dispatch_every_method(method):
    problem = QuadraticBilevel.random(5, 2, seed=14)
    theta = np.array([0.1, 0.2])
    phi_hat = solved(problem, theta)
    spec = EstimatorSpec.from_dict({"method": method, "rbp": {"k": 500}, "ep": {"beta": 1e-3}})
    est = estimate_hypergradient(problem, theta, phi_hat, spec, EXACT)
    assert est.method.value == method
    assert est.grad.shape == (2,)


def test_cost_counters():
    problem = QuadraticBilevel.random(6, 2, seed=15)
    theta = np.zeros(2)
    phi_hat = solved(problem, theta)
    assert oracle_exact(problem, phi_hat, theta).hvp_count == 6
    cg = conjugate_gradient(problem, phi_hat, theta)
    assert cg.hvp_count == cg.phase2_iters
    rbp = rbp_neumann(problem, phi_hat, theta, alpha=0.2, k=25)
    assert rbp.hvp_count == rbp.phase2_iters == 25
    ep = ep_estimate(problem, theta, phi_hat, solve_fd_stencil(4).with_step(0.01), EXACT)
    assert ep.hvp_count == 0
    assert ep.inner_solve_count == 3


def test_estimator_spec_strict_nested_fields():
    with pytest.raises(UnknownField) as err:
        EstimatorSpec.from_dict({"method": "ep", "ep": {"betta": 0.1}})
    assert err.value.path == "estimator.ep.betta"


def test_estimator_spec_validates_values():
    with pytest.raises(NonPositiveBeta):
        EstimatorSpec.from_dict({"ep": {"beta": 0.0}})
    with pytest.raises(ValueError):
        EstimatorSpec.from_dict({"method": "adjoint"})


def test_estimate_to_dict():
    est = conjugate_gradient(P1, [2.0], [2.0])
    data = est.to_dict()
    assert data["method"] == "cg"
    assert data["grad"] == [2.0]
