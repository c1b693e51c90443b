"""Employer-side inference about an admitted student's type.

Three independent routes to ``e(g) = E[T | G = g, A = 1]`` are provided:

* ``posterior_mean_threshold``: closed form for threshold rules, built on the
  hazard rate of the score given the grade.
* ``posterior_moment``: direct adaptive quadrature over types of
  ``t^k x(t) phi((g - t)/gamma) P(t)``; works for any non-zero rule.
* ``posterior_mean_randomized``: the prior and grade likelihood collapse to
  one Gaussian ``N(mu(g), lambda^2)``, after which the expectation is a
  one-dimensional integral over scores. For step rules that integral is a sum
  of truncated-normal pieces and is evaluated exactly.

``hiring_grade_threshold`` inverts ``e`` to get the employer's grade cut-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtr

from .gauss_core import (
    NEG_INF,
    POS_INF,
    GaussianParams,
    gaussian_product,
    hazard,
    interval_moments,
)
from .model import (
    AdmissionRule,
    AdmitAll,
    MonotoneStep,
    PopulationPrior,
    Threshold,
    acceptance_probability,
    log_acceptance_probability,
)

MAX_MOMENT = 8
QUAD_HALF_WIDTH = 12.0
ROOT_TOL = 1e-10
MAX_DOUBLINGS = 200


class NumericalPathologyError(RuntimeError):
    """A solver could not bracket or converge where theory guarantees it should."""


class Method(Enum):
    CLOSED_FORM = "closed-form"
    QUADRATURE = "quadrature"
    REDUCTION = "reduction"


@dataclass(frozen=True)
class EffectiveGradeReduction:
    """Prior times grade likelihood as a single Gaussian in the type.

    ``lambda_sq`` is the product variance ``gamma^2 sigma^2 / (gamma^2 + sigma^2)``
    and ``mu_of_g`` the precision-weighted mean at grade ``g``.
    """

    prior: PopulationPrior
    gamma: float

    @property
    def lambda_sq(self) -> float:
        g2, s2 = self.gamma**2, self.prior.sigma**2
        return g2 * s2 / (g2 + s2)

    def mu_of_g(self, g):
        g2, s2 = self.gamma**2, self.prior.sigma**2
        return (g2 * self.prior.mu + s2 * np.asarray(g, dtype=float)) / (s2 + g2)

    def grade_inverse(self, m):
        """Grade at which ``mu_of_g`` equals ``m``."""
        g2, s2 = self.gamma**2, self.prior.sigma**2
        return ((s2 + g2) * m - g2 * self.prior.mu) / s2


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    grade: float
    rule: AdmissionRule
    method: Method

    def __post_init__(self) -> None:
        if self.method is Method.CLOSED_FORM and not isinstance(self.rule, (Threshold, AdmitAll)):
            raise ValueError("the closed form only applies to threshold rules")


def _check_gamma(gamma: float) -> None:
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")


def _as_output(x, like):
    return float(x) if np.ndim(like) == 0 else x


def admit_all_mean(prior: PopulationPrior, gamma: float, g):
    """Posterior mean when everybody is admitted: ``(gamma^2 mu + sigma^2 g) / (sigma^2 + gamma^2)``."""
    return EffectiveGradeReduction(prior, gamma).mu_of_g(g)


def posterior_mean_threshold(prior: PopulationPrior, gamma: float, beta, g):
    """``E[T | S >= beta, G = g]`` in closed form.

    ``beta`` and ``g`` broadcast against each other. Entries of ``beta``
    equal to the ``NEG_INF`` sentinel drop the hazard term.
    """
    _check_gamma(gamma)
    beta_arr = np.asarray(beta, dtype=float)
    g_arr = np.asarray(g, dtype=float)
    if np.any(np.isnan(beta_arr)) or np.any(beta_arr == POS_INF):
        raise ValueError("beta must be finite or the NEG_INF sentinel")
    if not np.all(np.isfinite(g_arr)):
        raise ValueError("grade must be finite")
    s2, g2, mu = prior.sigma**2, gamma**2, prior.mu
    a = s2 + g2
    root = math.sqrt(a * (a + g2 * s2))
    beta_arr, g_arr = np.broadcast_arrays(beta_arr, g_arr)
    base = (g2 * mu + s2 * g_arr) / a
    admit_all = beta_arr == NEG_INF
    safe_beta = np.where(admit_all, 0.0, beta_arr)
    z = (a * safe_beta - g2 * mu - s2 * g_arr) / root
    out = np.where(admit_all, base, base + g2 * s2 * hazard(z) / root)
    return _as_output(out, np.broadcast(beta, g))


def posterior_mean_noiseless(prior: PopulationPrior, gamma: float, beta, g):
    """``E[T | T >= beta, G = g]``: the posterior when the exam reveals the type."""
    red = EffectiveGradeReduction(prior, gamma)
    lam = math.sqrt(red.lambda_sq)
    m = red.mu_of_g(g)
    beta_arr = np.asarray(beta, dtype=float)
    admit_all = beta_arr == NEG_INF
    z = (np.where(admit_all, 0.0, beta_arr) - m) / lam
    out = np.where(admit_all, m, m + lam * hazard(z))
    return _as_output(out, np.broadcast(beta, g))


# -- quadrature route -------------------------------------------------------


def _quadrature_window(prior: PopulationPrior, gamma: float, rule: AdmissionRule, g: float):
    """Integration window and log-scale for the type integrand at grade ``g``.

    The window is +-12 product-sds wide, centred on the mode of the full
    integrand (prior x grade likelihood x admission probability), so that a
    far-away threshold cannot drag the mass outside it.
    """
    prod = gaussian_product(prior.gaussian, GaussianParams(g, gamma))
    c, w = prod.mean, prod.sd

    def log_weight(t):
        z = (t - c) / w
        return log_acceptance_probability(rule, t) - 0.5 * z * z

    coarse = np.linspace(c - 40 * w, c + 40 * w, 1601)
    lw = log_weight(coarse)
    i = int(np.argmax(lw))
    lo = coarse[max(i - 1, 0)]
    hi = coarse[min(i + 1, len(coarse) - 1)]
    # golden-section polish of the mode; only needs to be roughly right
    for _ in range(40):
        m1 = hi - 0.618 * (hi - lo)
        m2 = lo + 0.618 * (hi - lo)
        if log_weight(m1) < log_weight(m2):
            lo = m1
        else:
            hi = m2
    mode = 0.5 * (lo + hi)
    return mode, w, log_weight, float(log_weight(mode))


def posterior_moments(
    prior: PopulationPrior, gamma: float, rule: AdmissionRule, g: float, k_max: int
) -> np.ndarray:
    """``[E[T^k | G = g, A = 1] for k = 1..k_max]`` by adaptive quadrature.

    Raises:
        ValueError: for the zero rule (the conditioning event is null) or
            ``k_max`` outside ``1..8``.
    """
    _check_gamma(gamma)
    if rule.is_zero:
        raise ValueError("cannot condition on admission under a rule that admits nobody")
    if not 1 <= k_max <= MAX_MOMENT:
        raise ValueError(f"moment order must be in 1..{MAX_MOMENT}, got {k_max}")
    if not math.isfinite(g):
        raise ValueError("grade must be finite")
    mode, w, log_weight, log_peak = _quadrature_window(prior, gamma, rule, g)
    lo, hi = mode - QUAD_HALF_WIDTH * w, mode + QUAD_HALF_WIDTH * w

    def integral(k: int, epsabs: float) -> float:
        # centred powers keep the integrand well scaled; expanded below
        f = lambda t: (t - mode) ** k * math.exp(float(log_weight(t)) - log_peak)
        val, _ = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=400, points=[mode])
        return val

    z = integral(0, 0.0)
    central = [integral(j, 1e-14 * z * w**j) / z for j in range(1, k_max + 1)]
    central = [1.0] + central
    raw = []
    for k in range(1, k_max + 1):
        # E[T^k] = sum_j C(k, j) mode^(k-j) E[(T - mode)^j]
        raw.append(sum(math.comb(k, j) * mode ** (k - j) * central[j] for j in range(k + 1)))
    return np.array(raw)


def posterior_moment(
    prior: PopulationPrior, gamma: float, rule: AdmissionRule, g: float, k: int
) -> float:
    """``E[T^k | G = g, A = 1]`` for any non-zero monotone rule, by quadrature."""
    return float(posterior_moments(prior, gamma, rule, g, k)[-1])


# -- score-integral reduction ----------------------------------------------


def _step_intervals(rule: AdmissionRule):
    """Constant pieces ``[lo, hi)`` of ``A(s)`` with their positive levels."""
    if rule.admits_all:
        return np.array([NEG_INF]), np.array([POS_INF]), np.array([1.0])
    if isinstance(rule, Threshold):
        return np.array([rule.beta]), np.array([POS_INF]), np.array([1.0])
    if isinstance(rule, MonotoneStep):
        scores = np.array([s for s, _ in rule.knots])
        probs = np.array([p for _, p in rule.knots])
        his = np.append(scores[1:], POS_INF)
        keep = probs > 0
        return scores[keep], his[keep], probs[keep]
    raise TypeError(f"unsupported rule {rule!r}")


def _weighted_score_mean(rule: AdmissionRule, center, scale: float):
    """Mean of ``S ~ N(center, scale^2)`` reweighted by ``A(S)``.

    Returns ``(log_normaliser, mean)`` where the normaliser is
    ``E[A(S)] = integral of A(s) N(s; center, scale^2) ds``.
    """
    lo, hi, lev = _step_intervals(rule)
    center = np.asarray(center, dtype=float)
    c = center[..., None]
    with np.errstate(invalid="ignore"):
        zlo = np.where(np.isinf(lo), lo, (lo - c) / scale)
        zhi = np.where(np.isinf(hi), hi, (hi - c) / scale)
    log_mass, zmean = interval_moments(zlo, zhi)
    logw = log_mass + np.log(lev)
    log_norm = logsumexp(logw, axis=-1)
    weights = np.exp(logw - log_norm[..., None])
    mean = center + scale * (weights * zmean).sum(axis=-1)
    return log_norm, mean


def posterior_mean_randomized(prior: PopulationPrior, gamma: float, rule: AdmissionRule, g):
    """``e(g)`` through the score-integral reduction.

    With ``m = mu(g)`` and ``l2 = lambda^2``, ``T | G = g ~ N(m, l2)`` and
    ``S | G = g ~ N(m, l2 + 1)``, so
    ``e(g) = m / (l2 + 1) + l2 / (l2 + 1) * E_A[S]`` where ``E_A`` reweights
    the score law by ``A(s)``. Vectorised over ``g``.
    """
    _check_gamma(gamma)
    if rule.is_zero:
        raise ValueError("cannot condition on admission under a rule that admits nobody")
    red = EffectiveGradeReduction(prior, gamma)
    l2 = red.lambda_sq
    m = red.mu_of_g(g)
    _, score_mean = _weighted_score_mean(rule, m, math.sqrt(l2 + 1.0))
    out = m / (l2 + 1.0) + l2 / (l2 + 1.0) * score_mean
    return _as_output(out, g)


def posterior_mean(prior: PopulationPrior, gamma: float, rule: AdmissionRule, g):
    """Fastest exact route to ``e(g)`` for the given rule."""
    if rule.is_zero:
        raise ValueError("cannot condition on admission under a rule that admits nobody")
    if isinstance(rule, Threshold) or rule.admits_all:
        beta = NEG_INF if rule.admits_all else rule.beta
        return posterior_mean_threshold(prior, gamma, beta, g)
    return posterior_mean_randomized(prior, gamma, rule, g)


def summarize_posterior(
    prior: PopulationPrior, gamma: float, rule: AdmissionRule, g: float, method: Method
) -> PosteriorSummary:
    if method is Method.CLOSED_FORM:
        if not (isinstance(rule, Threshold) or rule.admits_all):
            raise ValueError("the closed form only applies to threshold rules")
        value = posterior_mean(prior, gamma, rule, g)
    elif method is Method.QUADRATURE:
        value = posterior_moment(prior, gamma, rule, g, 1)
    else:
        value = posterior_mean_randomized(prior, gamma, rule, g)
    return PosteriorSummary(float(value), g, rule, method)


# -- inversion --------------------------------------------------------------


def solve_increasing(f, target, x0, step: float = 1.0, tol: float = ROOT_TOL):
    """Vectorised root of ``f(x) = target`` for strictly increasing ``f``.

    Brackets each entry by geometric expansion from ``x0`` then bisects until
    ``|f(x) - target| <= tol`` or the bracket shrinks to adjacent floats.

    Raises:
        NumericalPathologyError: if no bracket is found after 200 doublings.
    """
    target = np.asarray(target, dtype=float)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), target.shape).copy()
    f0 = np.asarray(f(x0), dtype=float) - target
    lo = x0.copy()
    hi = x0.copy()
    up = f0 < 0  # need to move right to find the upper bracket
    need = np.ones(target.shape, dtype=bool)
    need &= f0 != 0
    width = np.full(target.shape, step)
    for _ in range(MAX_DOUBLINGS):
        if not need.any():
            break
        cand = np.where(up, x0 + width, x0 - width)
        fc = np.asarray(f(cand), dtype=float) - target
        hit = need & np.where(up, fc >= 0, fc < 0)
        hi = np.where(hit & up, cand, hi)
        lo = np.where(hit & ~up, cand, lo)
        # keep the tightest known opposite end
        lo = np.where(need & up & ~hit, cand, lo)
        hi = np.where(need & ~up & ~hit, cand, hi)
        need &= ~hit
        width = width * 2.0
    if need.any():
        raise NumericalPathologyError(
            f"no bracket for target(s) {target[need]} after {MAX_DOUBLINGS} doublings"
        )
    root = np.where(f0 == 0, x0, 0.5 * (lo + hi))
    active = f0 != 0
    for _ in range(400):
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        fm = np.asarray(f(mid), dtype=float) - target
        done = active & ((np.abs(fm) <= tol) | (mid <= lo) | (mid >= hi))
        root = np.where(done, mid, root)
        active &= ~done
        lo = np.where(active & (fm < 0), mid, lo)
        hi = np.where(active & (fm >= 0), mid, hi)
    if active.any():
        raise NumericalPathologyError("bisection did not terminate")
    return root


def hiring_grade_threshold(prior: PopulationPrior, gamma: float, rule: AdmissionRule, cost):
    """``g*(C)``: the grade at which the employer's posterior mean equals ``C``.

    ``cost`` may be an array. The search starts from the admit-all inverse
    ``(sigma^2 + gamma^2)(C - gamma^2 mu / (sigma^2 + gamma^2)) / sigma^2``.
    """
    _check_gamma(gamma)
    if rule.is_zero:
        raise ValueError("rule admits nobody; no hiring threshold exists")
    c = np.asarray(cost, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("cost must be finite")
    red = EffectiveGradeReduction(prior, gamma)
    g0 = red.grade_inverse(c)
    out = solve_increasing(lambda g: posterior_mean(prior, gamma, rule, g), c, g0)
    return _as_output(out, cost)


def hiring_grade_thresholds_for_betas(prior: PopulationPrior, gamma: float, betas, costs):
    """``g*`` over an outer product of threshold values and costs.

    Returns an array of shape ``(len(betas), len(costs))``. Used by the sweeps,
    where thousands of inversions of the closed form are needed.
    """
    betas = np.asarray(betas, dtype=float)[:, None]
    costs = np.asarray(costs, dtype=float)[None, :]
    b, c = np.broadcast_arrays(betas, costs)
    red = EffectiveGradeReduction(prior, gamma)
    g0 = red.grade_inverse(c)
    return solve_increasing(lambda g: posterior_mean_threshold(prior, gamma, b, g), c, g0)


# -- admitted population -----------------------------------------------------


def admission_rate(prior: PopulationPrior, rule: AdmissionRule) -> float:
    """``Pr[A = 1]``; the score is ``N(mu, sigma^2 + 1)`` marginally."""
    if rule.is_zero:
        return 0.0
    if rule.admits_all:
        return 1.0
    scores, jumps = rule.steps()
    sd = math.sqrt(prior.sigma**2 + 1.0)
    return float((jumps * ndtr((prior.mu - scores) / sd)).sum())


def admitted_type_density(prior: PopulationPrior, rule: AdmissionRule, t):
    """Density of ``T`` among admitted students: ``x(t) P(t) / Pr[A = 1]``."""
    if rule.is_zero:
        raise ValueError("rule admits nobody")
    z = admission_rate(prior, rule)
    out = acceptance_probability(rule, t) * prior.pdf(t) / z
    return _as_output(out, t)


def mean_given_admission(prior: PopulationPrior, rule: AdmissionRule) -> float:
    """``E[T | A = 1]`` with no grade observed.

    ``E[T | S] = mu + sigma^2 / (1 + sigma^2) (S - mu)``, so only the
    admission-weighted score mean is needed. For a threshold this is
    ``mu + sigma^2 H((beta - mu)/sqrt(1 + sigma^2)) / sqrt(1 + sigma^2)``.
    """
    if rule.is_zero:
        raise ValueError("rule admits nobody")
    v = prior.sigma**2 + 1.0
    _, score_mean = _weighted_score_mean(rule, prior.mu, math.sqrt(v))
    return float(prior.mu + prior.sigma**2 / v * (score_mean - prior.mu))


def mean_given_score_above(prior: PopulationPrior, beta):
    """``E[T | S >= beta]`` in closed form, vectorised over ``beta``."""
    beta_arr = np.asarray(beta, dtype=float)
    sd = math.sqrt(1.0 + prior.sigma**2)
    admit_all = beta_arr == NEG_INF
    z = (np.where(admit_all, 0.0, beta_arr) - prior.mu) / sd
    out = np.where(admit_all, prior.mu, prior.mu + prior.sigma**2 * hazard(z) / sd)
    return _as_output(out, beta)
