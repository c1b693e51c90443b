"""Plain rejection-sampling estimates used to cross-check the closed forms.

Random numbers come from numpy's Philox4x64 counter-based generator. The
sample index range is cut into fixed chunks of ``CHUNK`` draws; chunk ``k``
uses the generator seeded with ``SeedSequence(seed).spawn(...)[k]``. Partial
sums are merged in chunk order, so an estimate depends only on
``(seed, n)`` and never on how many workers processed the chunks.

Within a chunk the draws are, in order: types, exam noise, grade noise,
admission uniforms.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import AdmissionRule, PopulationPrior

CHUNK = 1 << 18
MIN_SAMPLES = 100_000
MIN_EFFECTIVE = 100


class UnderSampledError(RuntimeError):
    """Too few accepted samples to report an estimate."""


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_effective: int
    seed: int

    def within(self, reference: float, k: float = 3.0) -> bool:
        return abs(self.value - reference) <= k * self.stderr


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _generators(seed: int, n_chunks: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def _run_chunks(kernel, n: int, seed: int, workers: int) -> np.ndarray:
    """Apply ``kernel(rng, size) -> partial sums`` per chunk and add up in order."""
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    sizes = _chunk_sizes(n)
    gens = _generators(seed, len(sizes))
    jobs = list(zip(gens, sizes))
    if workers <= 1:
        parts = [kernel(g, m) for g, m in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: kernel(*job), jobs))
    total = np.zeros_like(parts[0])
    for p in parts:
        total = total + p
    return total


def _admitted(rule: AdmissionRule, s: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u < rule.admit_prob(s)


def _mean_estimate(sums: np.ndarray, seed: int) -> McEstimate:
    n, s1, s2 = sums
    n = int(n)
    if n < MIN_EFFECTIVE:
        raise UnderSampledError(f"only {n} accepted samples (need {MIN_EFFECTIVE})")
    mean = s1 / n
    var = max((s2 - n * mean * mean) / (n - 1), 0.0)
    return McEstimate(float(mean), math.sqrt(var / n), n, seed)


def mc_posterior_mean(
    prior: PopulationPrior,
    gamma: float,
    rule: AdmissionRule,
    g_center: float,
    g_half_width: float = 0.02,
    n: int = 10_000_000,
    seed: int = 0,
    workers: int = 1,
) -> McEstimate:
    """Average type of admitted students whose grade falls within the window."""
    if g_half_width <= 0:
        raise ValueError("window half-width must be positive")

    def kernel(rng, m):
        t = rng.normal(prior.mu, prior.sigma, m)
        s = t + rng.standard_normal(m)
        g = t + gamma * rng.standard_normal(m)
        u = rng.random(m)
        keep = _admitted(rule, s, u) & (np.abs(g - g_center) <= g_half_width)
        tk = t[keep]
        return np.array([tk.size, tk.sum(), (tk * tk).sum()])

    return _mean_estimate(_run_chunks(kernel, n, seed, workers), seed)


def mc_hire_rate_given_type(
    prior: PopulationPrior,
    gamma: float,
    rule: AdmissionRule,
    g_star: float,
    t: float,
    n: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> McEstimate:
    """Fraction of students of fixed type ``t`` who are admitted and graded at least ``g*``."""

    def kernel(rng, m):
        rng.normal(prior.mu, prior.sigma, m)  # type draw unused; keeps the stream layout fixed
        s = t + rng.standard_normal(m)
        g = t + gamma * rng.standard_normal(m)
        u = rng.random(m)
        hired = _admitted(rule, s, u) & (g >= g_star)
        return np.array([m, hired.sum()], dtype=float)

    m, k = _run_chunks(kernel, n, seed, workers)
    p = k / m
    return McEstimate(float(p), math.sqrt(max(p * (1 - p), 0.0) / m), int(m), seed)


def mc_mean_given_admission(
    prior: PopulationPrior,
    rule: AdmissionRule,
    n: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> McEstimate:
    """Average type of admitted students when no grade is observed."""

    def kernel(rng, m):
        t = rng.normal(prior.mu, prior.sigma, m)
        s = t + rng.standard_normal(m)
        rng.standard_normal(m)
        u = rng.random(m)
        tk = t[_admitted(rule, s, u)]
        return np.array([tk.size, tk.sum(), (tk * tk).sum()])

    return _mean_estimate(_run_chunks(kernel, n, seed, workers), seed)
