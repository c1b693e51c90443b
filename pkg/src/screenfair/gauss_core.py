"""Scalar Gaussian primitives used throughout the pipeline model.

Everything here works on the standard normal density ``phi`` and cdf ``Phi``.
The hazard rate ``H(x) = phi(x) / (1 - Phi(x))`` is the workhorse: every
truncated-Gaussian mean in the package is ``mean + sd * H(z)``.

Infinite thresholds are accepted only as the explicit sentinels
``NEG_INF`` / ``POS_INF`` and are special-cased before any formula runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, log_ndtr, ndtr

NEG_INF = -math.inf
POS_INF = math.inf

_SQRT_2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _check_finite(x, name: str = "x") -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite, got {x!r}")


@dataclass(frozen=True)
class GaussianParams:
    """Univariate Gaussian ``N(mean, sd**2)``."""

    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")
        if not (math.isfinite(self.sd) and self.sd > 0):
            raise ValueError(f"sd must be positive and finite, got {self.sd}")

    @property
    def var(self) -> float:
        return self.sd * self.sd

    def pdf(self, x):
        return std_pdf((np.asarray(x, dtype=float) - self.mean) / self.sd) / self.sd

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sd)


@dataclass(frozen=True)
class ProductResult:
    """Normalised product of two Gaussian densities.

    ``mean``/``sd`` describe the resulting Gaussian; ``log_normalizer`` is the
    log of the integral of the unnormalised product
    ``phi((m1 - t)/s1) * phi((m2 - t)/s2)`` over ``t``.
    """

    mean: float
    sd: float
    log_normalizer: float

    @property
    def params(self) -> GaussianParams:
        return GaussianParams(self.mean, self.sd)


def std_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return out[()] if out.ndim == 0 else out


def std_pdf_cdf(x):
    """Return ``(phi(x), Phi(x))`` for the standard normal.

    Raises:
        ValueError: if ``x`` is not finite.
    """
    _check_finite(x)
    return std_pdf(x), ndtr(x)


def upper_tail(x):
    """``1 - Phi(x)``, computed without cancellation."""
    return ndtr(-np.asarray(x, dtype=float))


def hazard(x):
    """Standard normal hazard rate ``phi(x) / (1 - Phi(x))``.

    For ``x >= 0`` uses the scaled complementary error function, so the
    value stays accurate long after ``1 - Phi(x)`` underflows. For ``x < 0``
    the denominator is at least one half and the direct ratio is exact; the
    result underflows to 0 below roughly -38.6.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    pos = x >= 0
    out = np.empty_like(x)
    out[pos] = _SQRT_2_OVER_PI / erfcx(x[pos] / _SQRT_2)
    neg = ~pos
    xn = x[neg]
    out[neg] = std_pdf(xn) / ndtr(-xn)
    return out[()] if out.ndim == 0 else out


def log_hazard(x):
    """``log H(x)``; finite everywhere, including where ``H`` underflows."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    out = -0.5 * x * x - _LOG_SQRT_2PI - log_ndtr(-x)
    return out[()] if out.ndim == 0 else out


def truncated_mean(g: GaussianParams, lower: float) -> float:
    """Mean of ``g`` conditioned on exceeding ``lower``.

    ``lower`` may be the ``NEG_INF`` sentinel, in which case no truncation
    happens and the plain mean is returned.
    """
    if lower == NEG_INF:
        return g.mean
    if lower == POS_INF or not math.isfinite(lower):
        raise ValueError("lower must be finite or the NEG_INF sentinel")
    return g.mean + g.sd * float(hazard((lower - g.mean) / g.sd))


def gaussian_product(a: GaussianParams, b: GaussianParams) -> ProductResult:
    """Combine two Gaussian densities in ``t`` into one.

    ``phi((a.mean - t)/a.sd) * phi((b.mean - t)/b.sd)`` is proportional to a
    Gaussian density; the precision-weighted mean and harmonic variance are
    returned together with the log of the proportionality integral.
    """
    va, vb = a.var, b.var
    vsum = va + vb
    mean = (vb * a.mean + va * b.mean) / vsum
    sd = math.sqrt(va * vb / vsum)
    # integral of phi(u1) phi(u2) dt = s1 s2 / sqrt(s1^2 + s2^2) * phi(d / sqrt(s1^2 + s2^2))
    d = a.mean - b.mean
    log_norm = (
        math.log(a.sd) + math.log(b.sd) - 0.5 * math.log(vsum)
        - 0.5 * d * d / vsum - _LOG_SQRT_2PI
    )
    return ProductResult(mean=mean, sd=sd, log_normalizer=log_norm)


def trivariate_covariance(prior: GaussianParams, gamma: float) -> np.ndarray:
    """Covariance of ``(T, S, G)`` with unit exam noise and grade noise ``gamma``."""
    v = prior.var
    return np.array(
        [[v, v, v], [v, v + 1.0, v], [v, v, v + gamma * gamma]], dtype=float
    )


def condition_type_on_score_grade(
    prior: GaussianParams, gamma: float, s: float, g: float
) -> GaussianParams:
    """Exact law of ``T`` given ``S = s`` and ``G = g``."""
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive, got {gamma}")
    _check_finite([s, g], "score/grade")
    cov = trivariate_covariance(prior, gamma)
    s12 = cov[0, 1:]
    s22 = cov[1:, 1:]
    w = np.linalg.solve(s22, s12)
    mean = prior.mean + float(w @ (np.array([s, g]) - prior.mean))
    var = float(cov[0, 0] - s12 @ w)
    return GaussianParams(mean, math.sqrt(var))


def interval_moments(lo, hi):
    """Log-mass and conditional mean of ``N(0, 1)`` restricted to ``[lo, hi)``.

    ``lo`` may be ``-inf`` and ``hi`` may be ``+inf`` (the only place where
    float infinities are accepted, since these are integration limits of step
    functions). Works in the tail where the mass underflows, by expressing
    both the mass and the mean relative to the nearer tail.

    Returns:
        (log_mass, mean) arrays broadcast from the inputs.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    lo = lo.astype(float)
    hi = hi.astype(float)
    if np.any(hi <= lo):
        raise ValueError("empty interval")
    log_mass = np.empty(lo.shape)
    mean = np.empty(lo.shape)

    # mirror intervals lying in the left half so the computation sits in an upper tail
    flip = hi <= 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    sign = np.where(flip, -1.0, 1.0)

    upper = a >= 0
    # upper-tail regime: mass = Q(a) (1 - r), r = Q(b) / Q(a)
    if np.any(upper):
        au, bu = a[upper], b[upper]
        lq_a = log_ndtr(-au)
        finite_b = np.isfinite(bu)
        r = np.zeros_like(au)
        hb = np.zeros_like(au)
        r[finite_b] = np.exp(log_ndtr(-bu[finite_b]) - lq_a[finite_b])
        hb[finite_b] = hazard(bu[finite_b])
        log_mass[upper] = lq_a + np.log1p(-r)
        mean[upper] = (hazard(au) - hb * r) / (1.0 - r)

    # straddles zero: mass is at least moderately sized, direct formulas are fine
    mid = ~upper
    if np.any(mid):
        am, bm = a[mid], b[mid]
        mass = ndtr(bm) - ndtr(am)
        pa = np.where(np.isfinite(am), std_pdf(np.where(np.isfinite(am), am, 0.0)), 0.0)
        pb = np.where(np.isfinite(bm), std_pdf(np.where(np.isfinite(bm), bm, 0.0)), 0.0)
        log_mass[mid] = np.log(mass)
        mean[mid] = (pa - pb) / mass

    return log_mass, sign * mean
