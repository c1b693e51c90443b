"""Command-line interface.

Exit codes: 0 success, 1 an MC check failed, 2 bad input or unmet
precondition, 3 a solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .audit import SweepTarget, audit, default_threads, hire_probability_given_type, sweep_impossibility
from .calibration import (
    PreconditionError,
    calibrate_single_threshold_igm,
    eo_fixed_point_gamma1,
    no_grades_threshold,
    noiseless_rule,
)
from .gauss_core import NEG_INF
from .mc_oracle import (
    MIN_SAMPLES,
    UnderSampledError,
    mc_hire_rate_given_type,
    mc_mean_given_admission,
    mc_posterior_mean,
)
from .model import CostSpec, Scenario, Threshold
from .posterior import (
    NumericalPathologyError,
    admit_all_mean,
    hiring_grade_threshold,
    mean_given_admission,
    mean_given_score_above,
    posterior_mean,
    posterior_moment,
)
from .scenario_io import ScenarioError, load, parse_rule_spec

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3


class InputError(Exception):
    pass


@dataclass
class RunManifest:
    scenario: str
    subcommand: str
    parameters: dict
    seed: int | None = None
    outputs: list[str] = field(default_factory=list)
    version: str = __version__

    def comment_lines(self) -> list[str]:
        return [
            f"# tool: screenfair {self.version}",
            f"# subcommand: {self.subcommand}",
            f"# scenario: {self.scenario}",
            f"# parameters: {json.dumps(self.parameters, sort_keys=True)}",
            f"# seed: {self.seed if self.seed is not None else '-'}",
            f"# outputs: {', '.join(self.outputs) if self.outputs else '-'}",
        ]


def fmt(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(x)
    return f"{float(x):.12g}"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(manifest: RunManifest, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write("\n".join(manifest.comment_lines()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _print_kv(pairs: list[tuple[str, object]], out) -> None:
    for k, v in pairs:
        print(f"{k}: {v if isinstance(v, str) else fmt(v)}", file=out)


def _parse_beta(text: str) -> float:
    t = text.strip().lower()
    if t in ("-inf", "-infinity"):
        return NEG_INF
    try:
        x = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError("threshold must be finite or -inf")
    return x


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:n, got {text!r}") from None
    if n < 1 or not (math.isfinite(lo) and math.isfinite(hi)) or (n > 1 and hi <= lo):
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}")
    return np.linspace(lo, hi, n)


def _load_scenario(args) -> Scenario:
    try:
        scenario = load(args.scenario)
    except OSError as exc:
        raise InputError(f"cannot read scenario: {exc}") from None
    cost_range = getattr(args, "cost_range", None)
    if cost_range is not None:
        try:
            scenario = replace(scenario, cost=CostSpec(*cost_range))
        except ValueError as exc:
            raise InputError(f"--cost-range: {exc}") from None
    return scenario


# -- subcommands ------------------------------------------------------------


def cmd_posterior(args, out) -> int:
    scenario = _load_scenario(args)
    if not scenario.grading.disclose:
        raise PreconditionError("posterior needs disclosed grades (disclose = true)")
    prior = scenario.priors[args.group - 1]
    gamma = scenario.gamma
    rule = Threshold(args.beta)
    closed = posterior_mean(prior, gamma, rule, args.grade)
    quad = posterior_moment(prior, gamma, rule, args.grade, 1)
    pairs = [
        ("group", str(args.group)),
        ("beta", "-inf" if args.beta == NEG_INF else fmt(args.beta)),
        ("grade", fmt(args.grade)),
        ("closed_form_mean", closed),
        ("quadrature_mean", quad),
        ("difference", abs(closed - quad)),
    ]
    if args.beta == NEG_INF:
        pairs.append(("admit_all_limit", float(admit_all_mean(prior, gamma, args.grade))))
    _print_kv(pairs, out)
    return EXIT_OK


def cmd_calibrate(args, out) -> int:
    scenario = _load_scenario(args)
    if args.cost is not None:
        scenario = replace(scenario, cost=CostSpec.single(args.cost))
    mode = args.mode
    if mode == "igm":
        res = calibrate_single_threshold_igm(scenario)
        _print_kv([("mode", mode)] + list(res.as_dict().items()), out)
        return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE
    if mode == "eo-gamma1":
        res = eo_fixed_point_gamma1(scenario)
        _print_kv([("mode", mode)] + list(res.as_dict().items()), out)
        return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE
    if mode == "no-grades":
        beta = no_grades_threshold(scenario)
        pairs = [("mode", mode), ("beta", "-inf" if beta == NEG_INF else fmt(beta))]
        for i, prior in enumerate(scenario.priors, 1):
            pairs.append((f"mean_given_admission{i}", float(mean_given_score_above(prior, beta))))
        pairs.append(("cost_max", scenario.cost.c_max))
        _print_kv(pairs, out)
        return EXIT_OK
    rule = noiseless_rule(scenario.cost)
    _print_kv([("mode", mode), ("type_threshold", rule.beta), ("applies_to", "types (noiseless exam)")], out)
    return EXIT_OK


def _rules_for_audit(args, scenario: Scenario):
    rule1 = parse_rule_spec(args.rule1, "--rule1") if args.rule1 else scenario.rule1
    rule2 = parse_rule_spec(args.rule2, "--rule2") if args.rule2 else scenario.rule2
    if rule1 is None or rule2 is None:
        raise InputError("admission rules missing: give --rule1/--rule2 or rule1.*/rule2.* in the file")
    if rule1.is_zero or rule2.is_zero:
        raise InputError("admission rules must admit somebody")
    return rule1, rule2


def _rule_text(rule) -> str:
    return repr(rule)


def cmd_audit(args, out) -> int:
    scenario = _load_scenario(args)
    rule1, rule2 = _rules_for_audit(args, scenario)
    report = audit(scenario, rule1, rule2, noiseless=args.noiseless)
    pairs = [
        ("rule1", _rule_text(rule1)),
        ("rule2", _rule_text(rule2)),
        ("noiseless", args.noiseless),
        ("eo_gap", report.eo_gap),
        ("eo_argmax_t", report.eo_argmax),
        ("eo_argmax_cost", report.eo_cost_argmax),
        ("igm_violation", report.igm_violation),
        ("igm_argmax_cost", report.igm_argmax),
        ("sigm_gap", report.sigm_gap),
        ("sigm_argmax_t", report.sigm_argmax),
    ]
    pairs += [(f"grid.{k}", v) for k, v in report.grids.items()]
    _print_kv(pairs, out)
    if args.csv:
        manifest = RunManifest(
            scenario=str(args.scenario), subcommand="audit",
            parameters={"rule1": _rule_text(rule1), "rule2": _rule_text(rule2),
                        "noiseless": args.noiseless,
                        "cost": [scenario.cost.c_min, scenario.cost.c_max]},
            outputs=[str(args.csv)],
        )
        rows = [
            ["eo_gap", report.eo_gap, report.eo_argmax],
            ["igm_violation", report.igm_violation, report.igm_argmax],
            ["sigm_gap", report.sigm_gap, report.sigm_argmax],
        ]
        write_atomic(args.csv, _csv_text(manifest, ["metric", "value", "argmax"], rows))
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    scenario = _load_scenario(args)
    if not scenario.grading.disclose:
        raise PreconditionError("sweeps need disclosed grades (disclose = true)")
    target = SweepTarget(args.target)
    result = sweep_impossibility(scenario, args.grid1, args.grid2, target, threads=args.threads)
    manifest = RunManifest(
        scenario=str(args.scenario), subcommand="sweep",
        parameters={
            "target": target.value,
            "grid1": list(result.grid1), "grid2": list(result.grid2),
            "cost": [scenario.cost.c_min, scenario.cost.c_max],
        },
        outputs=[str(args.csv)] if args.csv else [],
    )
    rows = [[r.beta1, r.beta2, r.metric, r.value, r.argmax] for r in result.records]
    text = _csv_text(manifest, ["beta1", "beta2", "metric", "value", "argmax"], rows)
    summary = (
        f"minimum: {fmt(result.minimum)} at beta1={fmt(result.argmin[0])} "
        f"beta2={fmt(result.argmin[1])} ({target.value}, {len(result.records)} points)"
    )
    if args.csv:
        write_atomic(args.csv, text)
        print(summary, file=out)
    else:
        out.write(text)
        print(summary, file=sys.stderr)
    return EXIT_OK


def _mc_rows(scenario: Scenario, samples: int, seed: int, threads: int):
    """Canonical oracle suite: (name, closed form, McEstimate or error) per row."""
    rows = []
    k = 0

    def next_seed():
        nonlocal k
        k += 1
        return seed + k

    rules = [scenario.rule1 or Threshold(0.0), scenario.rule2 or Threshold(0.0)]
    c = scenario.cost.c_min
    for i, (prior, rule) in enumerate(zip(scenario.priors, rules), 1):
        if scenario.grading.disclose:
            gamma = scenario.gamma
            for g in (-1.0, 0.0, 1.0):
                name = f"posterior_mean[group={i},g={fmt(g)}]"
                closed = float(posterior_mean(prior, gamma, rule, g))
                rows.append((name, closed, _safe(mc_posterior_mean, prior, gamma, rule, g, 0.02,
                                                  samples, next_seed(), threads)))
            g_star = float(hiring_grade_threshold(prior, gamma, rule, c))
            for t in (-1.0, 0.0, 2.0):
                name = f"hire_probability[group={i},t={fmt(t)}]"
                closed = hire_probability_given_type(prior, gamma, rule, g_star, t)
                rows.append((name, closed, _safe(mc_hire_rate_given_type, prior, gamma, rule, g_star, t,
                                                  samples, next_seed(), threads)))
        name = f"mean_given_admission[group={i}]"
        rows.append((name, mean_given_admission(prior, rule),
                     _safe(mc_mean_given_admission, prior, rule, samples, next_seed(), threads)))
    return rows


def _safe(fn, *args):
    try:
        return fn(*args)
    except UnderSampledError as exc:
        return exc


def cmd_mc_check(args, out) -> int:
    if args.samples < MIN_SAMPLES:
        raise InputError(f"--samples must be at least {MIN_SAMPLES}, got {args.samples}")
    scenario = _load_scenario(args)
    rows = _mc_rows(scenario, args.samples, args.seed, args.threads or default_threads())
    manifest = RunManifest(
        scenario=str(args.scenario), subcommand="mc-check",
        parameters={"samples": args.samples, "k_stderr": 3.0}, seed=args.seed,
    )
    out.write("\n".join(manifest.comment_lines()) + "\n")
    out.write(f"{'check':<42} {'closed_form':>20} {'mc':>20} {'stderr':>20} {'z':>8}  status\n")
    ok = True
    for name, closed, est in rows:
        if isinstance(est, Exception):
            ok = False
            out.write(f"{name:<42} {fmt(closed):>20} {'-':>20} {'-':>20} {'-':>8}  UNDERSAMPLED\n")
            continue
        z = (est.value - closed) / est.stderr if est.stderr > 0 else (0.0 if est.value == closed else math.inf)
        passed = est.within(closed, 3.0)
        ok &= passed
        out.write(f"{name:<42} {fmt(closed):>20} {fmt(est.value):>20} {fmt(est.stderr):>20} "
                  f"{z:>8.3f}  {'PASS' if passed else 'FAIL'}\n")
    out.write(f"overall: {'PASS' if ok else 'FAIL'}\n")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screenfair",
        description="Posteriors, thresholds and fairness audits for a two-stage Gaussian screening pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"screenfair {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_arg(p):
        p.add_argument("scenario", help="scenario file (key = value)")

    def cost_range_arg(p):
        p.add_argument("--cost-range", nargs=2, type=float, metavar=("CMIN", "CMAX"),
                       help="override cost.min and cost.max from the file")

    p = sub.add_parser("posterior", help="closed-form vs quadrature posterior mean")
    scenario_arg(p)
    p.add_argument("--group", type=int, choices=(1, 2), default=1)
    p.add_argument("--beta", type=_parse_beta, required=True, help="admission threshold, or -inf")
    p.add_argument("--grade", type=float, required=True)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("calibrate", help="construct fair admission thresholds")
    scenario_arg(p)
    p.add_argument("--mode", choices=("igm", "no-grades", "noiseless", "eo-gamma1"), required=True)
    p.add_argument("--cost", type=float, help="override with a single hiring cost")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("audit", help="equal-opportunity, IGM and sIGM gaps")
    scenario_arg(p)
    cost_range_arg(p)
    p.add_argument("--rule1", help="e.g. threshold:0.5, step:0:0.5,1:1.0, admit-all")
    p.add_argument("--rule2")
    p.add_argument("--noiseless", action="store_true", help="apply rules to types (S = T)")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="violation floor over a grid of threshold pairs")
    scenario_arg(p)
    cost_range_arg(p)
    p.add_argument("--grid1", type=_parse_grid, default=_parse_grid("-3:3:41"), help="lo:hi:n")
    p.add_argument("--grid2", type=_parse_grid, default=_parse_grid("-3:3:41"), help="lo:hi:n")
    p.add_argument("--target", choices=[t.value for t in SweepTarget], default="multi-igm")
    p.add_argument("--threads", type=int, default=None, help="default: $SCREENFAIR_THREADS or 1")
    p.add_argument("--csv", help="write records here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mc-check", help="closed forms against Monte Carlo")
    scenario_arg(p)
    p.add_argument("--samples", type=int, default=2_000_000)
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_mc_check)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (ScenarioError, PreconditionError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalPathologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
