import io
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from pucheb.bvpsolve import (
    BoundaryCondition,
    BvpProblem,
    SingularSystemError,
    burgers_exact,
    burgers_problem,
    discretize,
    global_cheb_bvp,
    jacobian,
    load_problem,
    newton_solve,
    poisson_problem,
    refine_bvp,
    residual_vector,
    solve_linear,
)
from pucheb.chebcore import Interval
from pucheb.putree import refine


def bratu_problem(lam):
    """u'' + lam exp(u) = 0 on [0, 1], u(0) = u(1) = 0."""

    def residual(x, u, du, d2u):
        return d2u + lam * np.exp(u)

    def jac(x, u, du, d2u):
        return lam * np.exp(u), np.zeros_like(u), np.ones_like(u)

    bcs = (BoundaryCondition.dirichlet("left", 0.0), BoundaryCondition.dirichlet("right", 0.0))
    return BvpProblem(Interval(0.0, 1.0), residual, jac, bcs)


def bratu_exact(lam):
    """Lower branch: u = -2 log(cosh((x - 1/2) th / 2) / cosh(th / 4))."""
    th = brentq(lambda s: s - math.sqrt(2 * lam) * math.cosh(s / 4), 0.0, 4.0)
    return lambda x: -2.0 * np.log(np.cosh((x - 0.5) * th / 2) / np.cosh(th / 4))


@pytest.fixture(scope="module")
def burgers_solution():
    return refine_bvp(burgers_problem(5e-3, 1.0, 2.0), n_max=128, t=0.1, tol=1e-10)


class TestBoundaryCondition:
    def test_validation(self):
        with pytest.raises(ValueError):
            BoundaryCondition("middle", 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            BoundaryCondition("left", 0.0, 0.0, 1.0)

    def test_problem_needs_both_ends(self):
        bc = BoundaryCondition.dirichlet("left", 0.0)
        with pytest.raises(ValueError):
            BvpProblem.linear((0.0, 1.0), (bc, bc), lambda x: x)


class TestLinear:
    def test_zero_solution(self):
        tree = refine(np.cos, (-1.0, 1.0), 32)
        F = solve_linear(tree, poisson_problem(lambda x: np.zeros_like(x)))
        assert np.max(np.abs(F)) < 1e-13

    def test_manufactured_sine(self):
        problem = poisson_problem(lambda x: -np.pi**2 * np.sin(np.pi * x))
        tree, F, report = refine_bvp(problem, n_max=64, tol=1e-12)
        x = np.linspace(-1, 1, 2001)
        assert np.max(np.abs(tree(x) - np.sin(np.pi * x))) < 1e-8
        assert report.newton_iterations == [0] * len(report.passes)

    def test_solve_on_split_tree(self):
        tree = refine(lambda x: np.sin(3 * x), (-1.0, 1.0), 16, 0.1, 1e-13)
        assert len(tree.leaves()) > 1
        problem = poisson_problem(lambda x: -9 * np.sin(3 * x), left=np.sin(-3.0), right=np.sin(3.0))
        disc = discretize(tree)
        F = solve_linear(tree, problem, disc)
        assert np.max(np.abs(F - np.sin(3 * disc.x))) < 1e-9

    def test_robin_conditions(self):
        # u = exp(x): u' - u = 0 at both ends, u'' - u = 0 inside, pinned by a Dirichlet end
        bcs = (BoundaryCondition("left", 1.0, 0.0, math.exp(-1.0)), BoundaryCondition("right", 2.0, 1.0, 3 * math.e))
        problem = BvpProblem.linear((-1.0, 1.0), bcs, lambda x: np.zeros_like(x), c2=1.0, c0=-1.0)
        tree, F, _ = refine_bvp(problem, n_max=32, tol=1e-12)
        x = np.linspace(-1, 1, 501)
        assert np.max(np.abs(tree(x) - np.exp(x))) < 1e-10
        assert abs(2 * tree(1.0) + tree.deriv(1.0) - 3 * math.e) < 1e-9

    def test_interior_layer(self):
        a = 0.05
        u = lambda x: np.arctan(x / a)  # noqa: E731
        rhs = lambda x: -(2 * x / a**3) / (1 + (x / a) ** 2) ** 2  # noqa: E731
        problem = poisson_problem(rhs, left=u(-1.0), right=u(1.0))
        tree, F, report = refine_bvp(problem, n_max=128, t=0.1, tol=1e-10)
        x = np.linspace(-1, 1, 5001)
        assert report.leaves > 1
        assert np.max(np.abs(tree(x) - u(x))) < 1e-7

    def test_smooth_rhs_single_pass(self):
        tree, _, report = refine_bvp(poisson_problem(np.cos), n_max=64, tol=1e-12)
        assert len(report.passes) == 1 and len(tree.leaves()) == 1

    def test_boundary_residual(self):
        problem = poisson_problem(lambda x: np.exp(x), left=2.0, right=-1.0)
        tree, F, _ = refine_bvp(problem, n_max=32, tol=1e-12)
        assert abs(tree(-1.0) - 2.0) < 1e-9 and abs(tree(1.0) + 1.0) < 1e-9

    def test_pure_neumann_is_singular(self):
        """u'' = 1 with u'(-1) = u'(1) = 0 has no solution."""
        bcs = (BoundaryCondition("left", 0.0, 1.0, 0.0), BoundaryCondition("right", 0.0, 1.0, 0.0))
        problem = BvpProblem.linear((-1.0, 1.0), bcs, lambda x: np.ones_like(x))
        tree = refine(np.cos, (-1.0, 1.0), 16)
        with pytest.raises(SingularSystemError) as info:
            solve_linear(tree, problem)
        assert info.value.condition > 1e10

    def test_nonlinear_rejected_by_linear_solver(self):
        tree = refine(np.cos, (0.0, 1.0), 16)
        with pytest.raises(ValueError):
            solve_linear(tree, burgers_problem())


class TestJacobian:
    @pytest.mark.parametrize("problem", [burgers_problem(5e-2, 1.0, 2.0), bratu_problem(1.0)])
    def test_directional_finite_difference(self, problem, rng):
        tree = refine(lambda x: np.cos(3 * x), tuple(problem.interval), 32, 0.2, 1e-13)
        disc = discretize(tree)
        F = np.cos(3 * disc.x) + 0.1 * rng.standard_normal(disc.size)
        J = jacobian(disc, problem, F)
        for _ in range(3):
            v = rng.standard_normal(disc.size)
            h = 1e-6
            fd = (residual_vector(disc, problem, F + h * v) - residual_vector(disc, problem, F - h * v)) / (2 * h)
            assert np.linalg.norm(J @ v - fd) <= 1e-5 * np.linalg.norm(J @ v)

    def test_linear_jacobian_is_constant(self, rng):
        problem = poisson_problem(np.sin)
        disc = discretize(refine(np.cos, (-1.0, 1.0), 16))
        a = jacobian(disc, problem, rng.standard_normal(disc.size))
        b = jacobian(disc, problem, rng.standard_normal(disc.size))
        assert (a != b).nnz == 0


class TestNewton:
    def test_bratu(self):
        exact = bratu_exact(1.0)
        tree, F, report = refine_bvp(bratu_problem(1.0), n_max=32, tol=1e-12)
        x = np.linspace(0, 1, 1001)
        assert np.max(np.abs(tree(x) - exact(x))) < 1e-10
        assert report.converged and report.newton_iterations[0] <= 8

    def test_linear_problem_one_step(self):
        problem = bratu_problem(0.0)  # u'' = 0
        tree = refine(np.cos, (0.0, 1.0), 16)
        disc = discretize(tree)
        res = newton_solve(tree, problem, np.cos(disc.x), disc=disc)
        assert res.converged and res.iterations <= 2
        assert np.max(np.abs(res.F)) < 1e-10

    def test_linear_problem_matches_direct_solve(self):
        problem = poisson_problem(np.exp, left=1.0, right=2.0)
        tree = refine(np.cos, (-1.0, 1.0), 16)
        disc = discretize(tree)
        res = newton_solve(tree, problem, np.zeros(disc.size), disc=disc)
        assert res.iterations == 1
        np.testing.assert_allclose(res.F, solve_linear(tree, problem, disc), rtol=0, atol=1e-12)

    def test_shape_checked(self):
        tree = refine(np.cos, (0.0, 1.0), 16)
        with pytest.raises(ValueError, match="shape"):
            newton_solve(tree, bratu_problem(1.0), np.zeros(3))

    def test_history_recorded(self):
        tree = refine(np.cos, (0.0, 1.0), 16)
        disc = discretize(tree)
        res = newton_solve(tree, bratu_problem(1.0), np.zeros(disc.size), disc=disc)
        assert res.history[0] > res.history[-1] == res.residual_norm
        assert res.status in ("residual", "step")


class TestBurgers:
    def test_exact_beta(self):
        """For nu = 5e-3 the tanh term saturates and beta rounds to alpha."""
        beta, u = burgers_exact(5e-3, 1.0, 2.0)
        assert beta == 1.0
        assert u(0.5) == 0.0

    def test_exact_satisfies_equation(self):
        nu, alpha, kappa = 0.1, 1.0, 2.0
        beta, u = burgers_exact(nu, alpha, kappa)
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-4
        du = (u(x + h) - u(x - h)) / (2 * h)
        d2u = (u(x + h) - 2 * u(x) + u(x - h)) / h**2
        np.testing.assert_allclose(nu * d2u - u(x) * du, 0.0, atol=1e-6)
        du0 = (u(h) - u(-h)) / (2 * h)
        assert nu * du0 - kappa * (u(0.0) - alpha) == pytest.approx(0.0, abs=1e-7)

    def test_exact_bad_parameters(self):
        with pytest.raises(ValueError):
            burgers_exact(0.0, 1.0, 2.0)

    def test_refined_solution(self, burgers_solution):
        tree, F, report = burgers_solution
        _, exact = burgers_exact(5e-3, 1.0, 2.0)
        x = np.linspace(0, 1, 10_001)
        # the layer position is pinned only by exponentially small boundary terms,
        # so a rounding-level shift of the layer dominates the error
        assert np.max(np.abs(tree(x) - exact(x))) < 1e-4
        assert report.total_nodes <= 600 and len(report.passes) <= 8

    def test_residual_small(self, burgers_solution):
        tree, F, _ = burgers_solution
        problem = burgers_problem(5e-3, 1.0, 2.0)
        disc = discretize(tree)
        R = residual_vector(disc, problem, F)
        scale = np.max(np.abs(5e-3 * (disc.D2 @ F)))
        assert np.max(np.abs(R)) <= 1e-7 * scale

    def test_final_residual(self, burgers_solution):
        tree, F, report = burgers_solution
        R = residual_vector(discretize(tree), burgers_problem(5e-3, 1.0, 2.0), F)
        assert np.max(np.abs(R)) <= 1e-10
        assert report.residual_norm == pytest.approx(np.max(np.abs(R)), rel=1e-12)

    def test_report_serializes(self, burgers_solution):
        _, _, report = burgers_solution
        d = json.loads(json.dumps(report.to_dict()))
        assert d["leaves"] == report.leaves and len(d["newton_iterations"]) == len(report.passes)

    def test_global_baseline_needs_more_nodes(self, burgers_solution):
        degree, nodes, _ = global_cheb_bvp(burgers_problem(5e-2, 1.0, 2.0), tol=1e-10, n0=64)
        assert degree < nodes <= 400


class TestLoadProblem:
    def test_linear_json(self):
        text = json.dumps(
            {
                "interval": [0, 1],
                "rhs": "-pi^2*sin(pi*x)",
                "bcs": [
                    {"endpoint": "left", "a0": 1, "a1": 0, "value": 0},
                    {"endpoint": "right", "a0": 1, "a1": 0, "value": 0},
                ],
                "tol": 1e-11,
            }
        )
        problem, settings = load_problem(text)
        assert settings == {"tol": 1e-11} and problem.is_linear
        tree, _, _ = refine_bvp(problem, n_max=32, tol=settings["tol"])
        assert abs(tree(0.5) - 1.0) < 1e-9

    def test_burgers_preset(self):
        problem, settings = load_problem(io.StringIO('{"preset": "burgers", "nu": 0.01}'))
        assert settings["burgers"] == {"nu": 0.01, "alpha": 1.0, "kappa": 2.0}
        assert not problem.is_linear

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            load_problem('{"preset": "kdv"}')
