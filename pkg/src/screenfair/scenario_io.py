"""Reading and writing scenario files.

A scenario file is flat ``key = value`` text; ``#`` starts a comment.
Recognised keys::

    pop1.mu, pop1.sigma, pop2.mu, pop2.sigma   required
    gamma                                      required unless disclose = false
    disclose                                   true/false, default true
    cost.min, cost.max                         required
    rule1.kind, rule2.kind                     threshold | step | admit-all | admit-none
    rule1.beta, rule2.beta                     for threshold rules; -inf/inf allowed
    rule1.knots, rule2.knots                   for step rules, e.g. "0:0.5, 1:1.0"
"""

from __future__ import annotations

import math
import warnings
from pathlib import Path

from .model import (
    AdmissionRule,
    AdmitAll,
    AdmitNone,
    CostSpec,
    GradingPolicy,
    MonotoneStep,
    PopulationPrior,
    Scenario,
    Threshold,
)

REQUIRED = ("pop1.mu", "pop1.sigma", "pop2.mu", "pop2.sigma", "cost.min", "cost.max")
KNOWN = set(REQUIRED) | {
    "gamma", "disclose",
    "rule1.kind", "rule1.beta", "rule1.knots",
    "rule2.kind", "rule2.beta", "rule2.knots",
}
RULE_KINDS = ("threshold", "step", "admit-all", "admit-none")


class ScenarioError(ValueError):
    """A scenario file or rule specification is malformed; ``field`` names the culprit."""

    def __init__(self, field: str, problem: str):
        super().__init__(f"{field}: {problem}")
        self.field = field


def _parse_pairs(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN:
            raise ScenarioError(key, "unknown field")
        if key in out:
            raise ScenarioError(key, "given more than once")
        out[key] = value
    return out


def parse_float(field: str, value: str, allow_inf: bool = False) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ScenarioError(field, f"not a number: {value!r}") from None
    if math.isnan(x) or (math.isinf(x) and not allow_inf):
        raise ScenarioError(field, f"must be finite, got {value!r}")
    return x


def _parse_bool(field: str, value: str) -> bool:
    v = value.lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ScenarioError(field, f"expected true or false, got {value!r}")


def parse_knots(field: str, value: str) -> MonotoneStep:
    knots = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ScenarioError(field, f"knot {item!r} is not 'score:probability'")
        s, p = item.split(":", 1)
        knots.append((parse_float(field, s), parse_float(field, p)))
    try:
        return MonotoneStep(tuple(knots))
    except ValueError as exc:
        raise ScenarioError(field, str(exc)) from None


def parse_rule_spec(text: str, field: str = "rule") -> AdmissionRule:
    """Compact rule syntax used on the command line.

    ``threshold:0.5``, ``threshold:-inf``, ``step:0:0.5,1:1.0``,
    ``admit-all`` or ``admit-none``.
    """
    kind, _, rest = text.strip().partition(":")
    if kind == "threshold":
        return Threshold(parse_float(field, rest, allow_inf=True))
    if kind == "step":
        return parse_knots(field, rest)
    if kind == "admit-all" and not rest:
        return AdmitAll()
    if kind == "admit-none" and not rest:
        return AdmitNone()
    raise ScenarioError(field, f"cannot parse rule {text!r}")


def _rule_from(pairs: dict[str, str], name: str) -> AdmissionRule | None:
    kind_key = f"{name}.kind"
    if kind_key not in pairs:
        for extra in (f"{name}.beta", f"{name}.knots"):
            if extra in pairs:
                raise ScenarioError(kind_key, f"missing although {extra} is given")
        return None
    kind = pairs[kind_key]
    if kind not in RULE_KINDS:
        raise ScenarioError(kind_key, f"expected one of {', '.join(RULE_KINDS)}, got {kind!r}")
    if kind == "threshold":
        if f"{name}.beta" not in pairs:
            raise ScenarioError(f"{name}.beta", "missing field")
        return Threshold(parse_float(f"{name}.beta", pairs[f"{name}.beta"], allow_inf=True))
    if kind == "step":
        if f"{name}.knots" not in pairs:
            raise ScenarioError(f"{name}.knots", "missing field")
        return parse_knots(f"{name}.knots", pairs[f"{name}.knots"])
    return AdmitAll() if kind == "admit-all" else AdmitNone()


def loads(text: str) -> Scenario:
    pairs = _parse_pairs(text)
    for key in REQUIRED:
        if key not in pairs:
            raise ScenarioError(key, "missing field")
    disclose = _parse_bool("disclose", pairs["disclose"]) if "disclose" in pairs else True
    if disclose and "gamma" not in pairs:
        raise ScenarioError("gamma", "missing field")
    gamma = parse_float("gamma", pairs["gamma"]) if "gamma" in pairs else None

    def build(field, factory, *args):
        try:
            return factory(*args)
        except ValueError as exc:
            raise ScenarioError(field, str(exc)) from None

    pop1 = build("pop1", PopulationPrior,
                 parse_float("pop1.mu", pairs["pop1.mu"]), parse_float("pop1.sigma", pairs["pop1.sigma"]))
    pop2 = build("pop2", PopulationPrior,
                 parse_float("pop2.mu", pairs["pop2.mu"]), parse_float("pop2.sigma", pairs["pop2.sigma"]))
    grading = build("gamma", GradingPolicy, gamma, disclose)
    cost = build("cost", CostSpec,
                 parse_float("cost.min", pairs["cost.min"]), parse_float("cost.max", pairs["cost.max"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Scenario(pop1, pop2, grading, cost, _rule_from(pairs, "rule1"), _rule_from(pairs, "rule2"))


def load(path: str | Path) -> Scenario:
    return loads(Path(path).read_text())


def _rule_lines(name: str, rule: AdmissionRule | None) -> list[str]:
    if rule is None:
        return []
    if isinstance(rule, Threshold):
        return [f"{name}.kind = threshold", f"{name}.beta = {rule.beta!r}"]
    if isinstance(rule, MonotoneStep):
        knots = ", ".join(f"{s!r}:{p!r}" for s, p in rule.knots)
        return [f"{name}.kind = step", f"{name}.knots = {knots}"]
    return [f"{name}.kind = {'admit-all' if rule.admits_all else 'admit-none'}"]


def dumps(scenario: Scenario) -> str:
    lines = [
        f"pop1.mu = {scenario.pop1.mu!r}",
        f"pop1.sigma = {scenario.pop1.sigma!r}",
        f"pop2.mu = {scenario.pop2.mu!r}",
        f"pop2.sigma = {scenario.pop2.sigma!r}",
    ]
    if scenario.grading.gamma is not None:
        lines.append(f"gamma = {scenario.grading.gamma!r}")
    lines += [
        f"disclose = {'true' if scenario.grading.disclose else 'false'}",
        f"cost.min = {scenario.cost.c_min!r}",
        f"cost.max = {scenario.cost.c_max!r}",
    ]
    lines += _rule_lines("rule1", scenario.rule1) + _rule_lines("rule2", scenario.rule2)
    return "\n".join(lines) + "\n"
