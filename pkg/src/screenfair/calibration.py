"""Constructive admission policies for the regimes where fairness is attainable.

* ``calibrate_single_threshold_igm``: per-group thresholds that make the
  employer's grade cut-off identical across groups at one known cost.
* ``no_grades_threshold``: with grades withheld, a common threshold high
  enough that every admitted student is worth hiring.
* ``noiseless_rule``: with a noiseless exam, admit exactly the types above
  the top of the cost interval.
* ``eo_fixed_point_gamma1``: search for thresholds meeting the necessary
  equal-opportunity condition at ``gamma = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gauss_core import NEG_INF
from .model import AdmissionRule, CostSpec, Scenario, Threshold
from .posterior import (
    NumericalPathologyError,
    EffectiveGradeReduction,
    hiring_grade_threshold,
    mean_given_score_above,
    posterior_mean_threshold,
    solve_increasing,
)

RESIDUAL_TOL = 1e-8
IGM_SLACK = 1.0
DAMPING = 0.5
MAX_FIXED_POINT_ITER = 500


class PreconditionError(ValueError):
    """The scenario does not meet a solver's stated preconditions."""


@dataclass
class CalibrationResult:
    beta1: float
    beta2: float
    g_star: float
    residual1: float
    residual2: float
    converged: bool
    g_star2: float | None = None
    eo_residual: float | None = None
    iterations: int = 0
    trajectory: list[tuple[float, float]] = field(default_factory=list, repr=False)
    message: str = ""

    def __post_init__(self) -> None:
        if self.converged and max(abs(self.residual1), abs(self.residual2)) > RESIDUAL_TOL:
            raise ValueError("a converged calibration must have residuals within tolerance")

    def as_dict(self) -> dict:
        out = {
            "beta1": self.beta1,
            "beta2": self.beta2,
            "g_star": self.g_star,
            "residual1": self.residual1,
            "residual2": self.residual2,
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.g_star2 is not None:
            out["g_star2"] = self.g_star2
        if self.eo_residual is not None:
            out["eo_residual"] = self.eo_residual
        if self.message:
            out["message"] = self.message
        return out


def _require_single_cost(scenario: Scenario) -> float:
    if not scenario.cost.is_single:
        raise PreconditionError("this calibration needs a single cost (cost.min == cost.max)")
    return scenario.cost.c_min


def _require_grades(scenario: Scenario) -> float:
    if not scenario.grading.disclose:
        raise PreconditionError("this calibration needs disclosed grades (disclose = true)")
    return scenario.gamma


def calibrate_single_threshold_igm(scenario: Scenario, g_star: float | None = None) -> CalibrationResult:
    """Thresholds ``beta_i`` and a common grade ``g*`` with ``e_i(g*) = C`` for both groups.

    ``g*`` is placed so that both admit-all posterior means sit ``IGM_SLACK``
    below ``C``; each threshold is then raised until the posterior mean at
    ``g*`` reaches ``C``. Since ``e_i`` is strictly increasing in the grade,
    the employer hires exactly the students with grade at least ``g*`` in
    either group.

    A caller-supplied ``g_star`` is used as is; it must leave both admit-all
    posterior means strictly below ``C``, otherwise no threshold can work.
    """
    gamma = _require_grades(scenario)
    c = _require_single_cost(scenario)
    if g_star is None:
        g_star = min(
            float(EffectiveGradeReduction(p, gamma).grade_inverse(c - IGM_SLACK))
            for p in scenario.priors
        )
    else:
        g_star = float(g_star)
        if not math.isfinite(g_star):
            raise PreconditionError("g_star must be finite")
        for p in scenario.priors:
            if float(EffectiveGradeReduction(p, gamma).mu_of_g(g_star)) >= c:
                raise PreconditionError("g_star too high: admit-all posterior mean already reaches C")
    betas, residuals = [], []
    try:
        for prior in scenario.priors:
            beta = float(
                solve_increasing(
                    lambda b: posterior_mean_threshold(prior, gamma, b, g_star),
                    np.array(c), np.array(g_star), tol=1e-12,
                )
            )
            betas.append(beta)
            residuals.append(float(posterior_mean_threshold(prior, gamma, beta, g_star)) - c)
    except NumericalPathologyError as exc:
        return CalibrationResult(math.nan, math.nan, g_star, math.nan, math.nan, False, message=str(exc))
    converged = max(abs(r) for r in residuals) <= RESIDUAL_TOL
    return CalibrationResult(
        betas[0], betas[1], g_star, residuals[0], residuals[1], converged,
        message="" if converged else "residual above tolerance",
    )


def no_grades_threshold(scenario: Scenario) -> float:
    """Smallest common threshold with ``E[T_i | S_i >= beta] >= C+`` in both groups.

    Returns the ``NEG_INF`` sentinel when both prior means already reach
    ``C+``. The answer is bracketed to 1e-12 and the upper end returned, so
    the constraint holds exactly at the returned value.
    """
    if scenario.grading.disclose:
        raise PreconditionError("no-grades calibration needs disclose = false")
    target = scenario.cost.c_max
    p1, p2 = scenario.priors
    if min(p1.mu, p2.mu) >= target:
        return NEG_INF

    def worst(beta):
        return np.minimum(mean_given_score_above(p1, beta), mean_given_score_above(p2, beta))

    approx = float(solve_increasing(worst, np.array(target), np.array(target)))
    lo, hi = approx - 1.0, approx + 1.0
    while worst(lo) >= target:
        lo -= 1.0
    while worst(hi) < target:
        hi += 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if worst(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def noiseless_rule(cost: CostSpec) -> AdmissionRule:
    """Admit types at or above ``C+``; meant to be applied to ``S = T``.

    Every admitted type is then at least ``C+``, so the employer hires every
    graduate whatever the grade, and the hire probability of type ``t`` is
    ``1{t >= C+}`` in both groups.
    """
    return Threshold(cost.c_max)


def _cross_residuals(scenario: Scenario, beta1: float, beta2: float, c: float):
    p1, p2 = scenario.priors
    r1 = float(posterior_mean_threshold(p1, 1.0, beta1, beta2)) - c
    r2 = float(posterior_mean_threshold(p2, 1.0, beta2, beta1)) - c
    return r1, r2


def eo_fixed_point_gamma1(
    scenario: Scenario,
    damping: float = DAMPING,
    max_iter: int = MAX_FIXED_POINT_ITER,
    t_grid: np.ndarray | None = None,
) -> CalibrationResult:
    """Damped iteration for ``beta_1 = g*_2(C)`` and ``beta_2 = g*_1(C)``.

    At ``gamma = 1`` these cross conditions are necessary for equal
    opportunity with thresholds (for other ``gamma`` it is unattainable). The
    iteration has no convergence guarantee; non-convergence is reported, not
    raised. On convergence the equal-opportunity gap over ``t_grid`` is
    measured and stored in ``eo_residual``.
    """
    from .audit import default_t_grid, eo_gap_at_cost

    gamma = _require_grades(scenario)
    if gamma != 1.0:
        raise PreconditionError(f"the equal-opportunity fixed point requires gamma = 1, got {gamma}")
    c = _require_single_cost(scenario)
    p1, p2 = scenario.priors

    beta1 = beta2 = float(EffectiveGradeReduction(p1, 1.0).grade_inverse(c))
    trajectory = [(beta1, beta2)]
    r1 = r2 = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            target1 = float(hiring_grade_threshold(p2, 1.0, Threshold(beta2), c))
            target2 = float(hiring_grade_threshold(p1, 1.0, Threshold(beta1), c))
        except NumericalPathologyError as exc:
            return CalibrationResult(beta1, beta2, math.nan, r1, r2, False, iterations=it,
                                     trajectory=trajectory, message=str(exc))
        beta1 += damping * (target1 - beta1)
        beta2 += damping * (target2 - beta2)
        trajectory.append((beta1, beta2))
        if not (math.isfinite(beta1) and math.isfinite(beta2)):
            break
        r1, r2 = _cross_residuals(scenario, beta1, beta2, c)
        if max(abs(r1), abs(r2)) <= RESIDUAL_TOL:
            converged = True
            break

    if not converged:
        return CalibrationResult(beta1, beta2, math.nan, r1, r2, False, iterations=it,
                                 trajectory=trajectory, message="fixed-point iteration did not converge")
    # g*_1 = beta2 and g*_2 = beta1 at the fixed point
    grid = default_t_grid(scenario) if t_grid is None else t_grid
    eo, _ = eo_gap_at_cost(scenario, Threshold(beta1), Threshold(beta2), c, grid)
    return CalibrationResult(beta1, beta2, beta2, r1, r2, True, g_star2=beta1, eo_residual=eo,
                             iterations=it, trajectory=trajectory)
