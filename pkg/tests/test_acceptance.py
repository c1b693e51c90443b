"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or directly as a script.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from screenfair.audit import SweepTarget, audit, eo_gap, sweep_impossibility
from screenfair.calibration import (
    PreconditionError,
    calibrate_single_threshold_igm,
    eo_fixed_point_gamma1,
    no_grades_threshold,
    noiseless_rule,
)
from screenfair.gauss_core import hazard, log_hazard
from screenfair.mc_oracle import mc_mean_given_admission, mc_posterior_mean
from screenfair.model import CostSpec, GradingPolicy, MonotoneStep, PopulationPrior, Scenario, Threshold
from screenfair.posterior import (
    hiring_grade_threshold,
    mean_given_score_above,
    posterior_mean,
    posterior_mean_randomized,
    posterior_mean_threshold,
    posterior_moment,
    posterior_moments,
)
from screenfair.scenario_io import load

ROOT = Path(__file__).resolve().parents[1]
CANONICAL = ROOT / "scenarios" / "canonical.txt"
INTERVAL = CostSpec(0.3, 0.7)
SWEEP_GRID = np.linspace(-3.0, 3.0, 41)
STD = PopulationPrior(0.0, 1.0)


def _scenario(**changes) -> Scenario:
    base = load(CANONICAL)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return replace(base, **changes)


def _report(number: int, ok: bool, detail: str) -> None:
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)


def check_1():
    """Closed form vs quadrature (1e-7) and vs MC (3 stderr) on 25 (beta, g) pairs."""
    start = time.perf_counter()
    worst_quad, worst_z, failures = 0.0, 0.0, []
    pairs = [(b, g) for b in np.linspace(-2, 2, 5) for g in np.linspace(-2, 2, 5)]
    for k, (beta, g) in enumerate(pairs):
        closed = posterior_mean_threshold(STD, 1.0, beta, g)
        quad = posterior_moment(STD, 1.0, Threshold(beta), g, 1)
        worst_quad = max(worst_quad, abs(closed - quad))
        est = mc_posterior_mean(STD, 1.0, Threshold(beta), g, 0.02, n=10_000_000, seed=1000 + k, workers=4)
        z = abs(est.value - closed) / est.stderr
        worst_z = max(worst_z, z)
        if z > 3.0:
            failures.append((beta, g, z))
    elapsed = time.perf_counter() - start
    ok = worst_quad <= 1e-7 and not failures and elapsed <= 60.0
    return ok, f"max |closed-quad| = {worst_quad:.2e}, max |z| = {worst_z:.2f}, MC misses {failures}, {elapsed:.1f} s"


def check_2():
    """Hazard monotone on [-40, 40], sandwiched for x > 0, negligible at -40."""
    x = np.linspace(-40, 40, 10_000)
    h = hazard(x)
    nondecreasing = bool(np.all(np.diff(h) >= 0))
    strict_log = bool(np.all(np.diff(log_hazard(x)) > 0))
    pos = x > 0
    sandwich = bool(np.all(x[pos] <= h[pos]) and np.all(h[pos] <= x[pos] + 1 / x[pos]))
    left = float(hazard(-40.0))
    ok = nondecreasing and strict_log and sandwich and left < 1e-12
    return ok, f"monotone={nondecreasing}, strictly increasing in log={strict_log}, sandwich={sandwich}, H(-40)={left:.2e}"


def check_3():
    """d/dg m_k = (m_{k+1} - m_k m_1) / gamma^2 by central differences."""
    h = 1e-4
    worst = 0.0
    rules = [Threshold(0.0), MonotoneStep(((-0.5, 0.3), (1.0, 1.0))), MonotoneStep(((0.0, 0.5), (2.0, 1.0)))]
    for rule in rules:
        for g in (-1.0, 0.0, 1.0):
            m = posterior_moments(STD, 1.0, rule, g, 4)
            for k in (1, 2, 3):
                fd = (posterior_moment(STD, 1.0, rule, g + h, k) - posterior_moment(STD, 1.0, rule, g - h, k)) / (2 * h)
                ident = m[k] - m[k - 1] * m[0]
                worst = max(worst, abs(fd - ident) / abs(ident))
    return worst <= 1e-4, f"max relative error {worst:.2e}"


def check_4():
    """IGM calibration on the canonical scenario; identical hire decisions on 200 grades."""
    sc = load(CANONICAL)
    res = calibrate_single_threshold_igm(sc)
    c = sc.cost.c_min
    grades = np.linspace(res.g_star - 5, res.g_star + 5, 200)
    hire1 = posterior_mean_threshold(sc.pop1, sc.gamma, res.beta1, grades) >= c
    hire2 = posterior_mean_threshold(sc.pop2, sc.gamma, res.beta2, grades) >= c
    resid = max(abs(res.residual1), abs(res.residual2))
    same = bool(np.array_equal(hire1, hire2))
    ok = res.converged and resid <= 1e-8 and same
    return ok, (f"beta1={res.beta1:.6f}, beta2={res.beta2:.6f}, g*={res.g_star:.6f}, "
                f"max residual {resid:.1e}, decisions identical={same}")


def check_5():
    """sIGM gap positive on the whole 41x41 sweep; zero on the diagonal for identical priors."""
    res = sweep_impossibility(load(CANONICAL), SWEEP_GRID, SWEEP_GRID, SweepTarget.SIGM)
    same = _scenario(pop2=PopulationPrior(0.0, 1.0))
    diag = sweep_impossibility(same, SWEEP_GRID, SWEEP_GRID, SweepTarget.SIGM)
    diag_max = max(r.value for r in diag.records if r.beta1 == r.beta2)
    ok = res.minimum > 1e-4 and diag_max == 0.0
    return ok, f"min sigm gap {res.minimum:.4e} at {res.argmin}, identical-prior diagonal max {diag_max:.1e}"


def check_6():
    """Minimum IGM violation over the sweep with costs in [0.3, 0.7]."""
    res = sweep_impossibility(_scenario(cost=INTERVAL), SWEEP_GRID, SWEEP_GRID, SweepTarget.MULTI_IGM)
    return res.minimum > 1e-4, f"min igm violation {res.minimum:.4e} at (beta1, beta2) = {res.argmin}"


def check_7():
    """Minimum equal-opportunity violation over the cost interval, across the sweep."""
    res = sweep_impossibility(_scenario(cost=INTERVAL), SWEEP_GRID, SWEEP_GRID, SweepTarget.MULTI_EO)
    return res.minimum > 1e-4, f"min eo violation {res.minimum:.4e} at (beta1, beta2) = {res.argmin}"


def check_8():
    """Noiseless and no-grades pipelines are fair; the no-grades mean matches MC."""
    worst = 0.0
    details = []
    for cost in (CostSpec.single(0.5), INTERVAL):
        sc = _scenario(cost=cost)
        rule = noiseless_rule(cost)
        rep = audit(sc, rule, rule, noiseless=True)
        worst = max(worst, rep.eo_gap, rep.igm_violation)
        ng = _scenario(cost=cost, grading=GradingPolicy(None, False))
        beta = no_grades_threshold(ng)
        rep = audit(ng, Threshold(beta), Threshold(beta))
        worst = max(worst, rep.eo_gap, rep.igm_violation)
        details.append(f"beta_ng={beta:.6f}")
    mc_ok = True
    for k, (prior, beta) in enumerate([(STD, 0.0), (PopulationPrior(-1.0, 1.0), 0.5), (PopulationPrior(0.5, 2.0), -1.0)]):
        est = mc_mean_given_admission(prior, Threshold(beta), n=2_000_000, seed=500 + k)
        mc_ok &= est.within(float(mean_given_score_above(prior, beta)), 3.0)
    ok = worst <= 1e-12 and mc_ok
    return ok, f"max gap {worst:.1e}, MC agreement={mc_ok}, {', '.join(details)}"


def check_9():
    """Fixed point rejects gamma != 1; residuals on convergence; post-IGM EO gap positive."""
    rejected = True
    for gamma in (1.2, 2.0):
        try:
            eo_fixed_point_gamma1(_scenario(grading=GradingPolicy(gamma)))
            rejected = False
        except PreconditionError:
            pass
    residual_ok, notes = True, []
    for mu2, c in ((-0.5, 0.3), (-1.0, 0.5)):
        res = eo_fixed_point_gamma1(_scenario(pop2=PopulationPrior(mu2, 1.0), cost=CostSpec.single(c)))
        if res.converged:
            residual_ok &= max(abs(res.residual1), abs(res.residual2)) <= 1e-8
        notes.append(f"mu2={mu2}: converged={res.converged}, eo residual={res.eo_residual}")
    sc = load(CANONICAL)
    cal = calibrate_single_threshold_igm(sc)
    gap, _ = eo_gap(sc, Threshold(cal.beta1), Threshold(cal.beta2))
    ok = rejected and residual_ok and gap > 1e-4
    return ok, f"rejects gamma!=1={rejected}, post-IGM EO gap {gap:.4f}; " + "; ".join(notes)


def _random_step_rule(rng) -> MonotoneStep:
    n = int(rng.integers(1, 5))
    scores = np.sort(rng.uniform(-3, 3, n))
    probs = np.sort(rng.uniform(0.05, 1.0, n))
    return MonotoneStep(tuple(zip(scores.tolist(), probs.tolist())))


def check_10():
    """Step-rule reduction vs quadrature on 20 random rules; g* found for each."""
    rng = np.random.default_rng(20240610)
    worst, roots_ok = 0.0, True
    prior = PopulationPrior(-0.3, 1.2)
    for _ in range(20):
        rule = _random_step_rule(rng)
        for g in (-2.0, 0.0, 1.5):
            red = posterior_mean_randomized(prior, 1.0, rule, g)
            quad = posterior_moment(prior, 1.0, rule, g, 1)
            worst = max(worst, abs(red - quad))
        costs = np.array([-5.0, 0.0, 0.5, 5.0])
        try:
            gs = hiring_grade_threshold(prior, 1.0, rule, costs)
            back = posterior_mean(prior, 1.0, rule, gs)
            roots_ok &= bool(np.all(np.abs(back - costs) <= 1e-9) and np.all(np.diff(gs) > 0))
        except Exception:
            roots_ok = False
    return worst <= 1e-7 and roots_ok, f"max |reduction-quad| = {worst:.2e}, all g* found and increasing={roots_ok}"


def _cli(*args, threads: int = 1) -> subprocess.CompletedProcess:
    env = {"SCREENFAIR_THREADS": str(threads), "PATH": "/usr/bin:/bin"}
    return subprocess.run([sys.executable, "-m", "screenfair", *map(str, args)], capture_output=True, text=True,
                          env=env, cwd=ROOT, check=False)


def check_11():
    """mc-check and sweep outputs byte-identical across runs, value-identical across threads."""
    with tempfile.TemporaryDirectory() as tmp:
        mc = [_cli("mc-check", "scenarios/canonical.txt", "--seed", 7, threads=t) for t in (1, 1, 4)]
        mc_codes = [p.returncode for p in mc]
        sweeps = []
        for k, t in enumerate((1, 1, 4)):
            out = Path(tmp) / f"sweep{k}.csv"
            p = _cli("sweep", "scenarios/canonical.txt", "--cost-range", 0.3, 0.7, "--target", "multi-eo",
                     "--grid1=-3:3:11", "--grid2=-3:3:11", "--csv", out, threads=t)
            # the manifest names the output path; compare everything else
            text = "\n".join(l for l in out.read_text().splitlines() if not l.startswith("# outputs:"))
            sweeps.append((p.returncode, text, p.stdout.split(" (")[0]))
    mc_same = mc[0].stdout == mc[1].stdout
    mc_threads = mc[0].stdout == mc[2].stdout
    sweep_same = sweeps[0] == sweeps[1]
    sweep_threads = sweeps[0][1:] == sweeps[2][1:]
    ok = mc_codes == [0, 0, 0] and all(s[0] == 0 for s in sweeps) and mc_same and mc_threads and sweep_same and sweep_threads
    return ok, (f"mc-check exit codes {mc_codes}, repeat identical={mc_same}, threads 1 vs 4 identical={mc_threads}; "
                f"sweep repeat identical={sweep_same}, threads 1 vs 4 identical={sweep_threads}")


CHECKS = {n: globals()[f"check_{n}"] for n in range(1, 12)}


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number, capsys):
    ok, detail = CHECKS[number]()
    with capsys.disabled():
        print()
        _report(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for number, check in CHECKS.items():
        ok, detail = check()
        _report(number, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
