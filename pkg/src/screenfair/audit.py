"""Fairness metrics for a configured pipeline and sweeps over threshold pairs.

All suprema are grid suprema. The default type grid spans the union of both
priors' +-6 sd ranges at 2001 points and the default cost grid has 101
points on ``[C-, C+]`` (a single point when ``C- == C+``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .gauss_core import NEG_INF, POS_INF, hazard
from .model import (
    AdmissionRule,
    PopulationPrior,
    Scenario,
    Threshold,
    acceptance_probability,
)
from .posterior import (
    admitted_type_density,
    hiring_grade_threshold,
    hiring_grade_thresholds_for_betas,
    mean_given_admission,
    posterior_mean_noiseless,
    solve_increasing,
)

T_GRID_POINTS = 2001
T_GRID_SDS = 6.0
C_GRID_POINTS = 101
THREADS_ENV = "SCREENFAIR_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def default_t_grid(scenario: Scenario, n: int = T_GRID_POINTS) -> np.ndarray:
    lo = min(p.mu - T_GRID_SDS * p.sigma for p in scenario.priors)
    hi = max(p.mu + T_GRID_SDS * p.sigma for p in scenario.priors)
    return np.linspace(lo, hi, n)


def default_c_grid(scenario: Scenario, n: int = C_GRID_POINTS) -> np.ndarray:
    return scenario.cost.grid(n)


# -- per-group pipeline -----------------------------------------------------


def hire_probability_given_type(prior: PopulationPrior, gamma: float, rule: AdmissionRule, g_star, t):
    """``x(t) (1 - Phi((g* - t) / gamma))``: admitted, then graded above ``g*``.

    ``g_star`` may be the ``NEG_INF`` sentinel (every graduate hired) or
    ``POS_INF`` (nobody hired). ``prior`` is accepted for interface symmetry;
    given the type, the hire probability does not depend on it.
    """
    if rule.is_zero:
        raise ValueError("rule admits nobody")
    t = np.asarray(t, dtype=float)
    x = acceptance_probability(rule, t)
    gs = np.asarray(g_star, dtype=float)
    finite = np.isfinite(gs)
    z = (np.where(finite, gs, 0.0) - t) / gamma
    graded = np.where(finite, ndtr(-z), np.where(gs == NEG_INF, 1.0, 0.0))
    out = x * graded
    return float(out) if out.ndim == 0 else out


def _threshold_of(rule: AdmissionRule) -> float:
    if rule.admits_all:
        return NEG_INF
    if isinstance(rule, Threshold):
        return rule.beta
    raise ValueError("the noiseless pipeline supports threshold rules only")


@dataclass(frozen=True)
class _GroupPipeline:
    """One group's admission rule seen through the employer's eyes."""

    prior: PopulationPrior
    rule: AdmissionRule
    gamma: float | None  # None: grades withheld
    noiseless: bool = False

    def __post_init__(self) -> None:
        if self.rule.is_zero:
            raise ValueError("rule admits nobody")

    def x(self, t):
        if self.noiseless:
            beta = _threshold_of(self.rule)
            t = np.asarray(t, dtype=float)
            return np.ones_like(t) if beta == NEG_INF else (t >= beta).astype(float)
        return acceptance_probability(self.rule, t)

    def g_star(self, costs: np.ndarray) -> np.ndarray:
        """Grade cut-off per cost; ``NEG_INF`` = hire all, ``POS_INF`` = hire none."""
        costs = np.asarray(costs, dtype=float)
        if self.gamma is None:
            if self.noiseless:
                beta = _threshold_of(self.rule)
                m = self.prior.mu if beta == NEG_INF else self.prior.mu + self.prior.sigma * float(
                    hazard((beta - self.prior.mu) / self.prior.sigma))
            else:
                m = mean_given_admission(self.prior, self.rule)
            return np.where(m >= costs, NEG_INF, POS_INF)
        if self.noiseless:
            beta = _threshold_of(self.rule)
            out = np.full(costs.shape, NEG_INF)
            # the posterior never drops below beta, so costs at or below it hire everybody
            need = ~(costs <= beta)
            if need.any():
                out[need] = solve_increasing(
                    lambda g: posterior_mean_noiseless(self.prior, self.gamma, beta, g),
                    costs[need], costs[need],
                )
            return out
        return np.asarray(hiring_grade_threshold(self.prior, self.gamma, self.rule, costs), dtype=float)

    def hire(self, t: np.ndarray, costs: np.ndarray) -> np.ndarray:
        """Hire probability, shape ``(len(costs), len(t))``."""
        gs = self.g_star(costs)[:, None]
        x = self.x(t)[None, :]
        if self.gamma is None:
            return x * np.where(gs == NEG_INF, 1.0, 0.0) * np.ones((1, len(t)))
        finite = np.isfinite(gs)
        z = (np.where(finite, gs, 0.0) - t[None, :]) / self.gamma
        graded = np.where(finite, ndtr(-z), np.where(gs == NEG_INF, 1.0, 0.0))
        return x * graded

    def admitted_density(self, t: np.ndarray) -> np.ndarray:
        if self.noiseless:
            beta = _threshold_of(self.rule)
            z = 1.0 if beta == NEG_INF else float(ndtr((self.prior.mu - beta) / self.prior.sigma))
            return self.x(t) * self.prior.pdf(t) / z
        return admitted_type_density(self.prior, self.rule, t)


def _pipelines(scenario: Scenario, rule1, rule2, noiseless: bool):
    gamma = scenario.grading.gamma if scenario.grading.disclose else None
    return (
        _GroupPipeline(scenario.pop1, rule1, gamma, noiseless),
        _GroupPipeline(scenario.pop2, rule2, gamma, noiseless),
    )


# -- metrics ----------------------------------------------------------------


def _eo_full(pipe1, pipe2, t_grid, c_grid):
    diff = np.abs(pipe1.hire(t_grid, c_grid) - pipe2.hire(t_grid, c_grid))
    ci, ti = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return float(diff[ci, ti]), float(t_grid[ti]), float(c_grid[ci])


def eo_gap_at_cost(scenario: Scenario, rule1, rule2, cost: float, t_grid=None, noiseless: bool = False):
    """Equal-opportunity gap at one cost: ``max_t |hire_1(t) - hire_2(t)|``."""
    t_grid = default_t_grid(scenario) if t_grid is None else np.asarray(t_grid, dtype=float)
    p1, p2 = _pipelines(scenario, rule1, rule2, noiseless)
    gap, t_at, _ = _eo_full(p1, p2, t_grid, np.array([cost], dtype=float))
    return gap, t_at


def eo_gap(scenario: Scenario, rule1, rule2, t_grid=None, c_grid=None, noiseless: bool = False):
    """Largest hire-probability difference over the type grid and the cost grid.

    Returns ``(gap, t_argmax)``. With a cost interval this is the
    equal-opportunity violation over the whole interval.
    """
    t_grid = default_t_grid(scenario) if t_grid is None else np.asarray(t_grid, dtype=float)
    c_grid = default_c_grid(scenario) if c_grid is None else np.asarray(c_grid, dtype=float)
    p1, p2 = _pipelines(scenario, rule1, rule2, noiseless)
    gap, t_at, _ = _eo_full(p1, p2, t_grid, c_grid)
    return gap, t_at


def _g_star_distance(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    same = g1 == g2  # covers matching sentinels
    with np.errstate(invalid="ignore"):
        d = np.abs(g1 - g2)
    return np.where(same, 0.0, d)


def igm_violation(scenario: Scenario, rule1, rule2, c_grid=None, noiseless: bool = False):
    """``max_C |g*_1(C) - g*_2(C)|`` over the cost grid; returns ``(violation, C_argmax)``.

    Zero exactly when the employer's grade cut-offs, hence its decisions at
    every grade, coincide for every audited cost.
    """
    c_grid = default_c_grid(scenario) if c_grid is None else np.asarray(c_grid, dtype=float)
    p1, p2 = _pipelines(scenario, rule1, rule2, noiseless)
    d = _g_star_distance(p1.g_star(c_grid), p2.g_star(c_grid))
    i = int(np.argmax(d))
    return float(d[i]), float(c_grid[i])


def sigm_gap(scenario: Scenario, rule1, rule2, t_grid=None, noiseless: bool = False):
    """``max_t |density of admitted types, group 1 - same, group 2|``; returns ``(gap, t_argmax)``."""
    t_grid = default_t_grid(scenario) if t_grid is None else np.asarray(t_grid, dtype=float)
    p1, p2 = _pipelines(scenario, rule1, rule2, noiseless)
    d = np.abs(p1.admitted_density(t_grid) - p2.admitted_density(t_grid))
    i = int(np.argmax(d))
    return float(d[i]), float(t_grid[i])


@dataclass
class FairnessReport:
    eo_gap: float
    eo_argmax: float
    eo_cost_argmax: float
    igm_violation: float
    igm_argmax: float
    sigm_gap: float
    sigm_argmax: float
    grids: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def audit(scenario: Scenario, rule1=None, rule2=None, t_grid=None, c_grid=None,
          noiseless: bool = False) -> FairnessReport:
    """All three metrics for one pair of rules (defaults to the scenario's rules)."""
    rule1 = scenario.rule1 if rule1 is None else rule1
    rule2 = scenario.rule2 if rule2 is None else rule2
    if rule1 is None or rule2 is None:
        raise ValueError("both admission rules are required for an audit")
    t_grid = default_t_grid(scenario) if t_grid is None else np.asarray(t_grid, dtype=float)
    c_grid = default_c_grid(scenario) if c_grid is None else np.asarray(c_grid, dtype=float)
    p1, p2 = _pipelines(scenario, rule1, rule2, noiseless)
    eo, eo_t, eo_c = _eo_full(p1, p2, t_grid, c_grid)
    igm, igm_c = igm_violation(scenario, rule1, rule2, c_grid, noiseless)
    sg, sg_t = sigm_gap(scenario, rule1, rule2, t_grid, noiseless)
    grids = {
        "t_min": float(t_grid[0]), "t_max": float(t_grid[-1]), "t_points": len(t_grid),
        "c_min": float(c_grid[0]), "c_max": float(c_grid[-1]), "c_points": len(c_grid),
    }
    return FairnessReport(eo, eo_t, eo_c, igm, igm_c, sg, sg_t, grids)


# -- sweeps -----------------------------------------------------------------


class SweepTarget(Enum):
    MULTI_IGM = "multi-igm"
    MULTI_EO = "multi-eo"
    SIGM = "sigm"


@dataclass(frozen=True)
class SweepRecord:
    beta1: float
    beta2: float
    metric: str
    value: float
    argmax: float


@dataclass
class SweepResult:
    records: list[SweepRecord]
    minimum: float
    argmin: tuple[float, float]
    grid1: tuple[float, float, int]
    grid2: tuple[float, float, int]
    target: SweepTarget


def _group_tables(prior, gamma, betas, target, t_grid, c_grid):
    if target is SweepTarget.SIGM:
        return np.stack([admitted_type_density(prior, Threshold(b), t_grid) for b in betas])
    gs = hiring_grade_thresholds_for_betas(prior, gamma, betas, c_grid)  # (nb, nc)
    if target is SweepTarget.MULTI_IGM:
        return gs
    x = ndtr(t_grid[None, :] - np.asarray(betas)[:, None])  # (nb, nt)
    return x[:, None, :] * ndtr((t_grid[None, None, :] - gs[:, :, None]) / gamma)


def sweep_impossibility(
    scenario: Scenario,
    beta_grid1,
    beta_grid2,
    target: SweepTarget,
    t_grid=None,
    c_grid=None,
    threads: int | None = None,
) -> SweepResult:
    """Evaluate a violation functional on every ``(beta1, beta2)`` threshold pair.

    Rows (``beta1``) are evaluated in parallel threads; the record order is
    always ``beta1`` major, ``beta2`` minor, and values do not depend on the
    thread count.
    """
    gamma = scenario.gamma
    b1 = np.asarray(beta_grid1, dtype=float)
    b2 = np.asarray(beta_grid2, dtype=float)
    if not (np.all(np.isfinite(b1)) and np.all(np.isfinite(b2))):
        raise ValueError("threshold grids must be finite")
    t_grid = default_t_grid(scenario) if t_grid is None else np.asarray(t_grid, dtype=float)
    c_grid = default_c_grid(scenario) if c_grid is None else np.asarray(c_grid, dtype=float)
    tab1 = _group_tables(scenario.pop1, gamma, b1, target, t_grid, c_grid)
    tab2 = _group_tables(scenario.pop2, gamma, b2, target, t_grid, c_grid)
    axis_values = c_grid if target is SweepTarget.MULTI_IGM else t_grid

    def row(i: int) -> list[SweepRecord]:
        out = []
        for j in range(len(b2)):
            if target is SweepTarget.MULTI_IGM:
                d = _g_star_distance(tab1[i], tab2[j])
                k = int(np.argmax(d))
                val, at = float(d[k]), float(axis_values[k])
            elif target is SweepTarget.MULTI_EO:
                d = np.abs(tab1[i] - tab2[j])
                ci, ti = np.unravel_index(int(np.argmax(d)), d.shape)
                val, at = float(d[ci, ti]), float(t_grid[ti])
            else:
                d = np.abs(tab1[i] - tab2[j])
                k = int(np.argmax(d))
                val, at = float(d[k]), float(t_grid[k])
            out.append(SweepRecord(float(b1[i]), float(b2[j]), target.value, val, at))
        return out

    n_threads = default_threads() if threads is None else max(1, int(threads))
    if n_threads == 1:
        rows = [row(i) for i in range(len(b1))]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(row, range(len(b1))))
    records = [r for rows_i in rows for r in rows_i]
    best = min(records, key=lambda r: r.value)
    return SweepResult(
        records=records,
        minimum=best.value,
        argmin=(best.beta1, best.beta2),
        grid1=(float(b1[0]), float(b1[-1]), len(b1)),
        grid2=(float(b2[0]), float(b2[-1]), len(b2)),
        target=target,
    )
