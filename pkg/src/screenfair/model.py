"""Populations, grading, admission rules and the generative student model.

A student of group ``i`` has type ``T ~ N(mu_i, sigma_i^2)``, exam score
``S = T + X`` with ``X ~ N(0, 1)`` and grade ``G = T + Y`` with
``Y ~ N(0, gamma^2)``. The exam-noise variance is fixed at one; it is not a
parameter anywhere in this package.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .gauss_core import NEG_INF, POS_INF, GaussianParams


@dataclass(frozen=True)
class PopulationPrior:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu):
            raise ValueError(f"prior mean must be finite, got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"prior sd must be positive, got {self.sigma}")

    @property
    def gaussian(self) -> GaussianParams:
        return GaussianParams(self.mu, self.sigma)

    def pdf(self, t):
        return self.gaussian.pdf(t)


@dataclass(frozen=True)
class GradingPolicy:
    """Grade noise sd ``gamma``; ``disclose=False`` means no grades are reported."""

    gamma: float | None = 1.0
    disclose: bool = True

    def __post_init__(self) -> None:
        if self.disclose:
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise ValueError(f"gamma must be positive when grades are disclosed, got {self.gamma}")


# -- admission rules ---------------------------------------------------------


class _Rule:
    """Shared behaviour of admission rules.

    Every rule is represented internally as a non-decreasing step function
    ``A(s) = sum_k jump_k * 1{s >= score_k}`` so that
    ``x(t) = Pr[A = 1 | T = t] = sum_k jump_k * Phi(t - score_k)``.
    """

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def admits_all(self) -> bool:
        return False

    def admit_prob(self, s):
        """``A(s)``, the admission probability at score ``s``."""
        s = np.asarray(s, dtype=float)
        if self.is_zero:
            return np.zeros_like(s)
        if self.admits_all:
            return np.ones_like(s)
        scores, jumps = self.steps()
        return (jumps * (s[..., None] >= scores)).sum(axis=-1)


@dataclass(frozen=True)
class Threshold(_Rule):
    """Admit iff ``S >= beta``; ``beta`` may be ``NEG_INF`` or ``POS_INF``."""

    beta: float

    def __post_init__(self) -> None:
        if math.isnan(self.beta):
            raise ValueError("threshold must not be NaN")

    @property
    def is_zero(self) -> bool:
        return self.beta == POS_INF

    @property
    def admits_all(self) -> bool:
        return self.beta == NEG_INF

    def steps(self):
        return np.array([self.beta]), np.array([1.0])


@dataclass(frozen=True)
class MonotoneStep(_Rule):
    """Right-continuous randomized rule.

    ``knots`` is a sequence of ``(score, probability)``; ``A(s) = 0`` below
    the first score and equals the probability of the last knot at or below
    ``s`` otherwise.
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        knots = tuple((float(s), float(p)) for s, p in self.knots)
        object.__setattr__(self, "knots", knots)
        if not knots:
            raise ValueError("a step rule needs at least one knot")
        scores = [s for s, _ in knots]
        probs = [p for _, p in knots]
        if not all(math.isfinite(s) for s in scores):
            raise ValueError("knot scores must be finite")
        if any(b <= a for a, b in zip(scores, scores[1:])):
            raise ValueError("knot scores must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("knot probabilities must lie in [0, 1]")
        if any(b < a for a, b in zip(probs, probs[1:])):
            raise ValueError("knot probabilities must be non-decreasing")

    @property
    def is_zero(self) -> bool:
        return self.knots[-1][1] == 0.0

    def steps(self):
        scores = np.array([s for s, _ in self.knots])
        probs = np.array([p for _, p in self.knots])
        jumps = np.diff(probs, prepend=0.0)
        keep = jumps > 0
        return scores[keep], jumps[keep]


@dataclass(frozen=True)
class AdmitAll(_Rule):
    @property
    def admits_all(self) -> bool:
        return True

    def steps(self):
        return np.array([NEG_INF]), np.array([1.0])


@dataclass(frozen=True)
class AdmitNone(_Rule):
    @property
    def is_zero(self) -> bool:
        return True

    def steps(self):
        return np.empty(0), np.empty(0)


AdmissionRule = Union[Threshold, MonotoneStep, AdmitAll, AdmitNone]


def acceptance_probability(rule: AdmissionRule, t):
    """``x(t) = Pr[A = 1 | T = t] = integral of A(s) phi(s - t) ds``.

    Exact for every supported rule: a threshold gives ``1 - Phi(beta - t)``
    and a step rule a jump-weighted sum of such terms.
    """
    t = np.asarray(t, dtype=float)
    if rule.is_zero:
        out = np.zeros_like(t)
    elif rule.admits_all:
        out = np.ones_like(t)
    else:
        scores, jumps = rule.steps()
        out = (jumps * ndtr(t[..., None] - scores)).sum(axis=-1)
    return out[()] if out.ndim == 0 else out


def log_acceptance_probability(rule: AdmissionRule, t):
    """``log x(t)``, accurate deep in the left tail where ``x`` underflows."""
    t = np.asarray(t, dtype=float)
    if rule.is_zero:
        raise ValueError("rule admits nobody")
    if rule.admits_all:
        out = np.zeros_like(t)
    else:
        scores, jumps = rule.steps()
        out = logsumexp(log_ndtr(t[..., None] - scores), b=jumps, axis=-1)
    return out[()] if out.ndim == 0 else out


# -- costs and scenarios -----------------------------------------------------


@dataclass(frozen=True)
class CostSpec:
    c_min: float
    c_max: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c_min) and math.isfinite(self.c_max)):
            raise ValueError("costs must be finite")
        if self.c_min > self.c_max:
            raise ValueError(f"cost.min ({self.c_min}) exceeds cost.max ({self.c_max})")

    @classmethod
    def single(cls, c: float) -> "CostSpec":
        return cls(c, c)

    @property
    def is_single(self) -> bool:
        return self.c_min == self.c_max

    def grid(self, n: int = 101) -> np.ndarray:
        if self.is_single:
            return np.array([self.c_min])
        return np.linspace(self.c_min, self.c_max, n)


@dataclass(frozen=True)
class Scenario:
    pop1: PopulationPrior
    pop2: PopulationPrior
    grading: GradingPolicy
    cost: CostSpec
    rule1: AdmissionRule | None = None
    rule2: AdmissionRule | None = None

    def __post_init__(self) -> None:
        if self.pop1 == self.pop2:
            warnings.warn("identical priors: the two groups are indistinguishable", stacklevel=3)

    @property
    def gamma(self) -> float:
        if not self.grading.disclose:
            raise ValueError("scenario does not disclose grades")
        return float(self.grading.gamma)

    @property
    def priors(self) -> tuple[PopulationPrior, PopulationPrior]:
        return self.pop1, self.pop2

    @property
    def distinct_priors(self) -> bool:
        return self.pop1 != self.pop2


# -- sampling ----------------------------------------------------------------


@dataclass(frozen=True)
class StudentDraw:
    t: float
    s: float
    g: float


@dataclass
class StudentBatch:
    t: np.ndarray
    s: np.ndarray
    g: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.t)


def sample_students(
    prior: PopulationPrior, grading: GradingPolicy, n: int, rng: np.random.Generator
) -> StudentBatch:
    """Draw ``n`` students; grades are NaN when the policy withholds them."""
    t = rng.normal(prior.mu, prior.sigma, n)
    s = t + rng.standard_normal(n)
    if grading.disclose:
        g = t + rng.normal(0.0, grading.gamma, n)
    else:
        g = np.full(n, np.nan)
    return StudentBatch(t, s, g)


def sample_student(
    prior: PopulationPrior, grading: GradingPolicy, rng: np.random.Generator
) -> StudentDraw:
    b = sample_students(prior, grading, 1, rng)
    return StudentDraw(float(b.t[0]), float(b.s[0]), float(b.g[0]))
