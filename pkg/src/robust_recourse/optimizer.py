"""Projected gradient descent with backtracking line search.

Each accepted step satisfies the sufficient-decrease condition

    f(Proj(x - s*grad)) <= f(x) - ||x - Proj(x - s*grad)||^2 / (2s),

with the step s shrunk geometrically (s = zeta * lambda_ls^i for the
smallest admissible integer i >= 0).  Iteration stops early once the
prox-stationarity measure

    ||x - Proj(x - zeta*grad(x))||_2 / zeta

drops below station_tol; the same measure is reported as a diagnostic of
the returned point.
"""

from dataclasses import dataclass

import numpy as np

from . import feasibility as fz
from .errors import BudgetTooSmall, InfeasibleMargin
from .model import (
    FeatureVector,
    Mode,
    RecourseProblem,
    RecourseResult,
    validate_problem,
)
from .objective import (
    ObjectiveEval,
    eval_gaussian,
    eval_nonparametric,
    eval_weight_robust,
    eval_worst_component,
)


@dataclass(frozen=True)
class SolverConfig:
    """Line-search and stopping parameters.

    restarts > 1 adds extra runs from randomly perturbed feasible starts
    and keeps the best objective; restarts=1 is the plain single-start
    procedure.  finite_diff switches the gradient to central differences
    (debugging aid only).
    """

    lambda_ls: float = 0.7
    zeta: float = 1.0
    max_iter: int = 200
    station_tol: float = 1e-4
    max_backtracks: int = 50
    restarts: int = 3
    seed: int = 0
    finite_diff: bool = False
    proj_max_iter: int = 20000
    # keep projections well below station_tol^2: the line search compares
    # objective decrements of that order against projection-induced noise
    proj_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.lambda_ls < 1.0:
            raise ValueError(f"lambda_ls must lie in (0, 1), got {self.lambda_ls}")
        if not self.zeta > 0.0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")


def make_objective(problem: RecourseProblem):
    """The evaluation function for problem.mode: x -> ObjectiveEval."""
    belief = problem.belief
    mode = problem.mode
    if mode is Mode.NONPARAMETRIC:
        return lambda x: eval_nonparametric(x, belief)
    if mode is Mode.GAUSSIAN:
        return lambda x: eval_gaussian(x, belief)
    if mode is Mode.WEIGHT_ROBUST:
        return lambda x: eval_weight_robust(
            x, belief, problem.weight_budget, problem.divergence, gaussian=False
        )
    if mode is Mode.GAUSSIAN_WEIGHT_ROBUST:
        return lambda x: eval_weight_robust(
            x, belief, problem.weight_budget, problem.divergence, gaussian=True
        )
    if mode is Mode.WORST_COMPONENT:
        return lambda x: eval_worst_component(x, belief, gaussian=False)
    if mode is Mode.GAUSSIAN_WORST_COMPONENT:
        return lambda x: eval_worst_component(x, belief, gaussian=True)
    raise ValueError(f"unknown mode {mode}")


def _with_finite_diff(fn, step: float = 1e-6):
    def wrapped(x):
        ev = fn(x)
        grad = np.empty_like(np.asarray(x, dtype=float))
        for i in range(grad.size):
            e = np.zeros_like(grad)
            e[i] = step
            grad[i] = (fn(x + e).value - fn(x - e).value) / (2.0 * step)
        return ObjectiveEval(ev.value, grad, ev.component_values, ev.inner_dual)

    return wrapped


def pgd_minimize(fn, proj, config: SolverConfig, x_start, near_margin=None, callback=None):
    """Run the descent from x_start; fn(x) -> object with .value/.gradient.

    near_margin, when given, marks candidates sitting essentially on the
    robust-margin boundary; the first such acceptable candidate per
    iteration triggers one extra backtrack before being accepted (guard
    against the growing gradients next to the boundary).

    Returns (x, value, eval, iterations, converged, stationarity).
    """
    x = proj(np.asarray(x_start, dtype=float))
    ev = fn(x)
    if callback is not None:
        callback(0, x, ev.value)
    iterations = 0
    converged = False
    station = np.inf
    for t in range(config.max_iter):
        base_cand = proj(x - config.zeta * ev.gradient)
        station = float(np.linalg.norm(x - base_cand)) / config.zeta
        if station <= config.station_tol:
            converged = True
            break
        accepted = None
        extra_done = False
        i = 0
        while i <= config.max_backtracks:
            step = config.zeta * config.lambda_ls**i
            cand = base_cand if i == 0 else proj(x - step * ev.gradient)
            i += 1
            try:
                cand_ev = fn(cand)
            except InfeasibleMargin:
                continue
            dist2 = float(np.sum((x - cand) ** 2))
            if cand_ev.value <= ev.value - dist2 / (2.0 * step):
                if (
                    near_margin is not None
                    and not extra_done
                    and i <= config.max_backtracks
                    and near_margin(cand)
                ):
                    extra_done = True
                    continue
                accepted = (cand, cand_ev)
                break
        if accepted is None:
            # line search stalled: keep the current iterate, flag non-convergence
            break
        x, ev = accepted
        iterations = t + 1
        if callback is not None:
            callback(iterations, x, ev.value)
    final_cand = proj(x - config.zeta * ev.gradient)
    station = float(np.linalg.norm(x - final_cand)) / config.zeta
    if station <= config.station_tol:
        converged = True
    return x, ev.value, ev, iterations, converged, station


def solve(
    problem: RecourseProblem,
    config: SolverConfig | None = None,
    *,
    known_delta_min: float | None = None,
    callback=None,
) -> RecourseResult:
    """End-to-end solve: validate, check the budget against delta_min,
    project the input onto the feasible set and run the descent.

    known_delta_min skips the internal delta_min computation when the
    caller already solved it (e.g. to set delta = delta_min + delta_add).
    callback(iteration, x, value) fires on the start point and on every
    accepted step of every restart.
    """
    config = config or SolverConfig()
    validate_problem(problem)
    spec = fz.FeasibleSetSpec.from_problem(problem)
    dmin = fz.delta_min(spec, proj_max_iter=config.proj_max_iter, proj_tol=config.proj_tol) \
        if known_delta_min is None else float(known_delta_min)
    if problem.delta < dmin - 1e-9:
        raise BudgetTooSmall(f"delta={problem.delta} is below delta_min={dmin}")

    fn = make_objective(problem)
    if config.finite_diff:
        fn = _with_finite_diff(fn)

    if problem.delta - dmin <= max(1e-9, 1e-12 * dmin):
        # the budget pins the feasible set to the cost-argmin set; take its
        # cheapest point directly, descent has no room to move
        best = fz.min_cost_point(spec, proj_tol=config.proj_tol)
        if best is not None:
            ev = fn(best[0])
            return RecourseResult(
                action=FeatureVector(best[0]),
                objective=float(min(max(ev.value, 0.0), 1.0)),
                component_probs=ev.component_values,
                iterations=0,
                stationarity=0.0,
                delta_min=dmin,
                converged=True,
            )

    def proj(y):
        return fz.project_feasible(y, spec, config.proj_max_iter, config.proj_tol)

    guard_band = 1e-6

    def near_margin(y):
        return float(np.min(fz.margin_slacks(y, spec))) < guard_band

    x_start = spec.x0
    seeds = np.random.SeedSequence(config.seed).spawn(max(config.restarts - 1, 0))
    best = None
    for run in range(max(config.restarts, 1)):
        if run == 0:
            start = x_start
        else:
            rng = np.random.default_rng(seeds[run - 1])
            scale = 0.25 * max(problem.delta, problem.margin)
            start = x_start + rng.normal(scale=scale, size=x_start.size)
        outcome = pgd_minimize(fn, proj, config, start, near_margin, callback)
        if best is None or outcome[1] < best[1]:
            best = outcome
    x, value, ev, iterations, converged, station = best

    return RecourseResult(
        action=FeatureVector(x),
        objective=float(min(max(value, 0.0), 1.0)),
        component_probs=ev.component_values,
        iterations=iterations,
        stationarity=station,
        delta_min=dmin,
        converged=converged,
    )


def stationarity(x, problem: RecourseProblem, config: SolverConfig | None = None) -> float:
    """Prox-stationarity measure ||x - Proj(x - zeta*grad f(x))||_2 / zeta."""
    config = config or SolverConfig()
    spec = fz.FeasibleSetSpec.from_problem(problem)
    fn = make_objective(problem)
    x = np.asarray(x, dtype=float)
    grad = fn(x).gradient
    cand = fz.project_feasible(
        x - config.zeta * grad, spec, config.proj_max_iter, config.proj_tol
    )
    return float(np.linalg.norm(x - cand)) / config.zeta
