import numpy as np
import pytest

from robust_recourse import feasibility as fz
from robust_recourse.errors import BudgetTooSmall
from robust_recourse.model import (
    ComponentMoments,
    Cost,
    FeatureVector,
    MixtureBelief,
    Mode,
    RecourseProblem,
    problem_with,
)
from robust_recourse.objective import ObjectiveEval
from robust_recourse.optimizer import SolverConfig, pgd_minimize, solve, stationarity


def toy_problem(rho=0.1, mode=Mode.NONPARAMETRIC, cost=Cost.L1, delta_add=1.0, **kw):
    x0 = FeatureVector.from_features([-1.2, -0.8])
    belief = MixtureBelief(
        (ComponentMoments([1.0, 0.9, 0.2], 0.05 * np.eye(3), rho),), [1.0]
    )
    prob = RecourseProblem(
        x0=x0, belief=belief, delta=0.0, margin=1e-3, cost=cost, mode=mode, **kw
    )
    spec = fz.FeasibleSetSpec.from_problem(prob)
    dmin = fz.delta_min(spec)
    return problem_with(prob, delta=dmin + delta_add), dmin


class TestSolve:
    def test_descends_and_converges(self):
        prob, dmin = toy_problem()
        trace = []
        res = solve(
            prob,
            SolverConfig(restarts=1),
            known_delta_min=dmin,
            callback=lambda t, x, v: trace.append(v),
        )
        assert res.converged
        assert res.stationarity <= 1e-4
        assert res.objective < trace[0]
        assert all(b <= a for a, b in zip(trace, trace[1:]))

    def test_action_is_feasible_with_margin(self):
        prob, dmin = toy_problem()
        res = solve(prob, SolverConfig(restarts=1), known_delta_min=dmin)
        spec = fz.FeasibleSetSpec.from_problem(prob)
        assert fz.is_feasible(res.action.values, spec, 1e-7)
        comp = prob.belief.components[0]
        x = res.action.values
        assert comp.mean @ x - comp.radius * np.linalg.norm(x) >= prob.margin - 1e-7

    def test_iterates_feasible(self):
        prob, dmin = toy_problem()
        spec = fz.FeasibleSetSpec.from_problem(prob)
        seen = []
        solve(
            prob,
            SolverConfig(restarts=1),
            known_delta_min=dmin,
            callback=lambda t, x, v: seen.append(x.copy()),
        )
        assert seen
        for x in seen:
            assert fz.is_feasible(x, spec, 1e-7)

    def test_budget_too_small(self):
        prob, dmin = toy_problem()
        with pytest.raises(BudgetTooSmall):
            solve(problem_with(prob, delta=max(dmin - 0.1, 0.0)), SolverConfig(restarts=1))

    def test_delta_min_reported(self):
        prob, dmin = toy_problem()
        res = solve(prob, SolverConfig(restarts=1))
        assert res.delta_min == pytest.approx(dmin, abs=1e-9)

    def test_modes_all_run(self):
        for mode in Mode:
            prob, dmin = toy_problem(mode=mode, weight_budget=0.1)
            res = solve(prob, SolverConfig(restarts=1), known_delta_min=dmin)
            assert 0.0 <= res.objective <= 1.0
            assert res.component_probs.shape == (1,)

    def test_deterministic(self):
        prob, dmin = toy_problem()
        cfg = SolverConfig(restarts=3, seed=11)
        a = solve(prob, cfg, known_delta_min=dmin)
        b = solve(prob, cfg, known_delta_min=dmin)
        assert np.array_equal(a.action.values, b.action.values)
        assert a.objective == b.objective
        assert a.iterations == b.iterations
        assert a.stationarity == b.stationarity

    def test_delta_add_zero_returns_min_cost_point(self):
        prob, dmin = toy_problem(delta_add=0.0)
        res = solve(prob, SolverConfig(restarts=1), known_delta_min=dmin)
        assert res.converged
        assert res.iterations == 0
        cost = float(np.abs(res.action.values - prob.x0.values).sum())
        assert cost == pytest.approx(dmin, abs=1e-6)

    def test_gaussian_probs_below_half(self):
        prob, dmin = toy_problem(mode=Mode.GAUSSIAN)
        res = solve(prob, SolverConfig(restarts=1), known_delta_min=dmin)
        assert np.all(res.component_probs < 0.5)

    def test_restarts_never_worse(self):
        prob, dmin = toy_problem(rho=0.2)
        single = solve(prob, SolverConfig(restarts=1, seed=3), known_delta_min=dmin)
        multi = solve(prob, SolverConfig(restarts=4, seed=3), known_delta_min=dmin)
        assert multi.objective <= single.objective + 1e-12


class TestPgdCore:
    def test_quadratic_reaches_interior_minimizer(self):
        prob, dmin = toy_problem(delta_add=5.0)
        spec = fz.FeasibleSetSpec.from_problem(prob)
        xbar = fz.project_feasible(np.array([1.0, 1.0, 1.0]), spec)
        xbar = xbar + np.array([0.05, 0.05, 0.0])  # interior nudge
        assert fz.is_feasible(xbar, spec, 1e-9)

        def quad(x):
            return ObjectiveEval(float(np.sum((x - xbar) ** 2)), 2.0 * (x - xbar), np.zeros(1))

        proj = lambda y: fz.project_feasible(y, spec, 10000, 1e-8)
        x, value, _, iters, converged, station = pgd_minimize(
            quad, proj, SolverConfig(station_tol=1e-8, max_iter=500), spec.x0
        )
        assert converged
        assert np.linalg.norm(x - xbar) <= 1e-6

    def test_zero_gradient_stationarity(self):
        prob, dmin = toy_problem(delta_add=2.0)
        spec = fz.FeasibleSetSpec.from_problem(prob)
        # strictly interior point: every projection is the identity on it
        x = fz.project_feasible(np.array([0.8, 0.8, 1.0]), spec)
        x = x + 0.02 * (spec.x0 - x)
        assert fz.is_feasible(x, spec, 0.0)

        def flat(y):
            return ObjectiveEval(1.0, np.zeros_like(y), np.zeros(1))

        proj = lambda y: fz.project_feasible(y, spec, 10000, 1e-8)
        got, value, _, iters, converged, station = pgd_minimize(
            flat, proj, SolverConfig(), x
        )
        assert station == 0.0
        assert iters == 0


class TestStationarity:
    def test_converged_solution_is_stationary(self):
        prob, dmin = toy_problem()
        cfg = SolverConfig(restarts=1)
        res = solve(prob, cfg, known_delta_min=dmin)
        post_hoc = stationarity(res.action.values, prob, cfg)
        assert post_hoc <= cfg.station_tol * 1.5

    def test_far_point_not_stationary(self):
        prob, dmin = toy_problem()
        spec = fz.FeasibleSetSpec.from_problem(prob)
        x_start = fz.project_feasible(prob.x0.values, spec)
        assert stationarity(x_start, prob, SolverConfig()) > 1e-3

    def test_finite_diff_mode_agrees(self):
        prob, dmin = toy_problem()
        res_a = solve(prob, SolverConfig(restarts=1), known_delta_min=dmin)
        res_f = solve(
            prob, SolverConfig(restarts=1, finite_diff=True), known_delta_min=dmin
        )
        assert res_f.objective == pytest.approx(res_a.objective, abs=1e-6)
