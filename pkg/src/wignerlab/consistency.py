"""Cross-agent, cross-policy comparison of Born-rule predictions.

For every check, each listed agent's final state assignment under each policy
gives a prediction: an outcome distribution, a definite/undefined verdict for
an observable, or an interference witness. Predictions are compared over every
pair of policies with total-variation distance.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidScenario, MissingAgent
from .hilbert import EPS_NORM, spin_quantum_number
from .mixtures import Definite, DensityOperator, Undefined, definite_value, interference_witness, probabilities, reduce_to
from .numfmt import format_float
from .policies import (
    MAX_LISTED_TRAJECTORIES,
    Policy,
    UnitaryOnly,
    as_policy,
    assign_states,
    check_policy,
    evolve,
    sample_runs,
)
from .scenarios import Check, MeasureEvent, Scenario, validate_scenario

CONSISTENT = "CONSISTENT"
CONTRADICTION = "CONTRADICTION"
DEFINABILITY_MISMATCH = "DEFINABILITY_MISMATCH"

FLAG_SIGMAS = 3.0


@dataclass(frozen=True)
class Prediction:
    agent: str
    policy: str
    kind: str  # "distribution" | "definite" | "witness"
    distribution: tuple[tuple[str, float], ...] | None = None
    value: Definite | Undefined | None = None
    witness: float | None = None
    provenance: str = ""

    def probability(self, label: str) -> float:
        return dict(self.distribution or ())[label]


@dataclass(frozen=True)
class PredictionTable:
    """Predictions keyed by ``(agent, policy text, check index)``."""

    scenario: str
    entries: dict

    def get(self, agent: str, policy: str, check: int) -> Prediction:
        try:
            return self.entries[(agent, policy, check)]
        except KeyError:
            raise MissingAgent(f"no prediction for agent {agent!r} under {policy} on check {check + 1}") from None


def _predict(rho: DensityOperator, s: Scenario, check: Check, agent: str, policy: str) -> Prediction:
    local = reduce_to(rho, check.targets)
    prov = "proper" if rho.provenance.kind == "proper" else local.provenance.kind
    if check.kind in ("outcome", "distribution"):
        dist = tuple(probabilities(local, check.readout_basis(s.register)))
        return Prediction(agent, policy, "distribution", distribution=dist, provenance=prov)
    if check.kind == "definite":
        value = definite_value(local, check.observable_on(s.register))
        return Prediction(agent, policy, "definite", value=value, provenance=prov)
    basis = check.basis.build(s.register, check.targets)
    return Prediction(agent, policy, "witness", witness=interference_witness(local, basis), provenance=prov)


def prediction_table(s: Scenario, policies: Sequence[Policy | str]) -> PredictionTable:
    entries = {}
    for p in policies:
        pol = as_policy(p)
        views = assign_states(s, pol)
        for ci, c in enumerate(s.checks):
            for agent in c.agents:
                entries[(agent, str(pol), ci)] = _predict(views[agent].final, s, c, agent, str(pol))
    return PredictionTable(s.name, entries)


def total_variation(p: Sequence[tuple[str, float]], q: Sequence[tuple[str, float]]) -> float:
    a, b = dict(p), dict(q)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in {**a, **b})


@dataclass(frozen=True)
class VerdictEntry:
    check: int
    description: str
    policies: tuple[str, str]
    tol: float
    predictions: tuple[Prediction, ...]
    gap: float
    verdict: str


def compare_predictions(
    table: PredictionTable, check: Check, index: int, policies: tuple[str, str], tol: float | None = None
) -> VerdictEntry:
    tol = check.tol if tol is None else tol
    preds = tuple(table.get(a, p, index) for p in dict.fromkeys(policies) for a in check.agents)
    verdict = CONSISTENT
    gap = 0.0
    kind = preds[0].kind
    if kind == "distribution":
        gap = max((total_variation(x.distribution, y.distribution) for x, y in itertools.combinations(preds, 2)), default=0.0)
    elif kind == "witness":
        gap = max((abs(x.witness - y.witness) for x, y in itertools.combinations(preds, 2)), default=0.0)
    else:
        defined = [isinstance(x.value, Definite) for x in preds]
        if any(defined) and not all(defined):
            verdict = DEFINABILITY_MISMATCH
        elif all(defined):
            gap = max((abs(x.value.value - y.value.value) for x, y in itertools.combinations(preds, 2)), default=0.0)
    if verdict == CONSISTENT and gap > tol:
        verdict = CONTRADICTION
    return VerdictEntry(index, check.describe(), policies, tol, preds, gap, verdict)


def policy_pairs(policies: Sequence[str]) -> list[tuple[str, str]]:
    if len(policies) == 1:
        return [(policies[0], policies[0])]
    return list(itertools.combinations(policies, 2))


# -- Monte Carlo ------------------------------------------------------------


@dataclass(frozen=True)
class MCOutcome:
    label: str
    count: int
    frequency: float
    analytic: float
    sigma: float | None
    flagged: bool


@dataclass(frozen=True)
class MCCheck:
    check: int
    description: str
    outcomes: tuple[MCOutcome, ...]

    @property
    def flagged(self) -> bool:
        return any(o.flagged for o in self.outcomes)

    def outcome(self, label: str) -> MCOutcome:
        for o in self.outcomes:
            if o.label == label:
                return o
        raise KeyError(label)


@dataclass(frozen=True)
class MonteCarloSection:
    policy: str
    n: int
    seed: int
    checks: tuple[MCCheck, ...]
    trajectories: tuple | None

    @property
    def flagged(self) -> bool:
        return any(c.flagged for c in self.checks)


def _exceeds(count: int, n: int, p: float, sigmas: float) -> bool:
    sigma = math.sqrt(max(p * (1.0 - p), 0.0) / n)
    dev = abs(count / n - p)
    if sigma == 0.0:
        return dev > EPS_NORM
    return dev > sigmas * sigma


def monte_carlo_check(s: Scenario, p: Policy | str, n: int, seed: int) -> MonteCarloSection:
    """Empirical readout frequencies over runs ``0..n-1`` against the exact Born weights.

    Each outcome gets a binomial band ``sigma = sqrt(p (1 - p) / n)`` (omitted
    for ``n == 1``) and is flagged when it sits more than 3 sigma from the
    analytic value. Up to 100 runs are also listed individually.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pol = as_policy(p)
    batch = sample_runs(s, pol, n, seed)
    evo = batch.evolution
    a = evo.arrays
    leaf_probs = np.array([b.prob for b in evo.leaves])
    leaf_probs = leaf_probs / leaf_probs.sum()
    checks = []
    for k, ci in enumerate(a["readout_checks"]):
        labels = a["readout_labels"][k]
        analytic = np.zeros(len(labels))
        n_read = len(a["readout_checks"])
        for leaf, w in enumerate(leaf_probs):
            slot = leaf * n_read + k
            st = a["readout_start"][slot]
            analytic += w * a["readout_prob"][st : st + a["readout_count"][slot]]
        counts = np.bincount(batch.readouts[:, k], minlength=len(labels)) if n else np.zeros(len(labels), int)
        outs = []
        for j, label in enumerate(labels):
            pj = float(min(max(analytic[j], 0.0), 1.0))
            c = int(counts[j])
            sigma = math.sqrt(pj * (1.0 - pj) / n) if n > 1 else None
            outs.append(MCOutcome(label, c, c / n, pj, sigma, _exceeds(c, n, pj, FLAG_SIGMAS) if n > 1 else False))
        checks.append(MCCheck(ci, s.checks[ci].describe(), tuple(outs)))
    trajectories = None
    if n <= MAX_LISTED_TRAJECTORIES:
        trajectories = tuple(batch.trajectory(r) for r in range(n))
    return MonteCarloSection(str(pol), n, seed, tuple(checks), trajectories)


# -- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class ConsistencyReport:
    scenario: str
    policies: tuple[str, ...]
    entries: tuple[VerdictEntry, ...]
    seed: int | None = None
    monte_carlo: MonteCarloSection | None = None

    @property
    def consistent(self) -> bool:
        return all(e.verdict == CONSISTENT for e in self.entries)

    def verdicts(self) -> list[str]:
        return [e.verdict for e in self.entries]

    def entry(self, check: int, policies: tuple[str, str] | None = None) -> VerdictEntry:
        for e in self.entries:
            if e.check == check and (policies is None or e.policies == policies):
                return e
        raise KeyError((check, policies))


def check_scenario(
    s: Scenario,
    policies: Iterable[Policy | str],
    tol: float | None = None,
    seed: int | None = None,
) -> ConsistencyReport:
    issues = validate_scenario(s)
    if issues:
        raise InvalidScenario(issues)
    pols = [as_policy(p) for p in policies]
    if not pols:
        raise ValueError("check_scenario needs at least one policy")
    if tol is not None and not tol > 0:
        raise ValueError("tolerance must be positive")
    for p in pols:
        check_policy(s, p)
    names = list(dict.fromkeys(str(p) for p in pols))
    table = prediction_table(s, pols)
    entries = [
        compare_predictions(table, c, ci, pair, tol)
        for ci, c in enumerate(s.checks)
        for pair in policy_pairs(names)
    ]
    return ConsistencyReport(s.name, tuple(names), tuple(entries), seed)


def diagonal_agreement(s: Scenario, p: Policy | str, q: Policy | str = UnitaryOnly()) -> dict[str, float]:
    """Largest probability gap between policies ``p`` and ``q`` in the basis of
    each measurement that ``p`` collapses, over every step from that
    measurement on.
    """
    pol = as_policy(p)
    ep, eq = evolve(s, pol), evolve(s, as_policy(q))
    gaps = {}
    for k, ev in enumerate(s.events):
        if not isinstance(ev, MeasureEvent) or not pol.collapses(ev.agent):
            continue
        basis = ev.basis.build(s.register, ev.targets)
        worst = 0.0
        for step in range(k + 1, len(s.events) + 1):
            a = probabilities(ep.global_state(step), basis)
            b = probabilities(eq.global_state(step), basis)
            worst = max(worst, max(abs(x - y) for (_, x), (_, y) in zip(a, b)))
        gaps[ev.record] = worst
    return gaps


def _prediction_dict(pr: Prediction) -> dict:
    d = {"agent": pr.agent, "policy": pr.policy, "provenance": pr.provenance}
    if pr.kind == "distribution":
        d["distribution"] = {label: p for label, p in pr.distribution}
    elif pr.kind == "definite":
        if isinstance(pr.value, Definite):
            d["definite"] = True
            d["value"] = pr.value.value
        else:
            d["definite"] = False
    else:
        d["witness"] = pr.witness
    return d


def _mc_dict(mc: MonteCarloSection) -> dict:
    d = {
        "policy": mc.policy,
        "n": mc.n,
        "seed": mc.seed,
        "flagged": mc.flagged,
        "checks": [
            {
                "check": c.check + 1,
                "description": c.description,
                "outcomes": [
                    {
                        "label": o.label,
                        "count": o.count,
                        "frequency": o.frequency,
                        "analytic": o.analytic,
                        "sigma": o.sigma,
                        "flagged": o.flagged,
                    }
                    for o in c.outcomes
                ],
            }
            for c in mc.checks
        ],
    }
    if mc.trajectories is not None:
        d["trajectories"] = [
            {
                "run": t.run_index,
                "records": {r: v for r, v in t.records},
                "readouts": {str(ci + 1): v for ci, v in t.readouts},
            }
            for t in mc.trajectories
        ]
    return d


def report_to_dict(r: ConsistencyReport) -> dict:
    d = {
        "scenario": r.scenario,
        "policies": list(r.policies),
        "seed": r.seed,
        "checks": [
            {
                "check": e.check + 1,
                "description": e.description,
                "policies": list(e.policies),
                "tol": e.tol,
                "verdict": e.verdict,
                "gap": e.gap,
                "predictions": [_prediction_dict(p) for p in e.predictions],
            }
            for e in r.entries
        ],
    }
    if r.monte_carlo is not None:
        d["monte_carlo"] = _mc_dict(r.monte_carlo)
    return d


def dumps(obj, indent: int = 2) -> str:
    """JSON with insertion-ordered keys and floats in the shared 17-digit format."""

    def enc(x, level: int) -> str:
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if x is None or isinstance(x, (bool, str)):
            return json.dumps(x)
        if isinstance(x, int):
            return str(x)
        if isinstance(x, float):
            s = format_float(x)
            return s if any(ch in s for ch in ".e") else s + ".0"
        if isinstance(x, dict):
            if not x:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in x.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(x, (list, tuple)):
            if not x:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in x) + "\n" + end + "]"
        raise TypeError(f"cannot encode {type(x).__name__}")

    return enc(obj, 0) + "\n"


def report_to_json(r: ConsistencyReport) -> str:
    return dumps(report_to_dict(r))


def render_text(r: ConsistencyReport) -> str:
    lines = [f"scenario {r.scenario}", "policies " + " | ".join(r.policies)]
    if r.seed is not None:
        lines.append(f"seed {r.seed}")
    for e in r.entries:
        pair = e.policies[0] if e.policies[0] == e.policies[1] else f"{e.policies[0]} vs {e.policies[1]}"
        lines.append(f"check {e.check + 1}: {e.description} [{pair}]")
        for p in e.predictions:
            if p.kind == "distribution":
                body = " ".join(f"{label}={x:.6g}" for label, x in p.distribution)
            elif p.kind == "definite":
                v = p.value
                body = (
                    f"definite {v.value:.6g} (s={spin_quantum_number(v.value):.6g})"
                    if isinstance(v, Definite)
                    else "undefined"
                )
            else:
                body = f"witness {p.witness:.6g}"
            lines.append(f"  {p.agent:<10} {p.policy:<24} {body}  ({p.provenance})")
        lines.append(f"  => {e.verdict} gap={e.gap:.6g} tol={format_float(e.tol)}")
    mc = r.monte_carlo
    if mc is not None:
        lines.append(f"monte carlo: policy {mc.policy}, n={mc.n}, seed={mc.seed}")
        for c in mc.checks:
            lines.append(f"  check {c.check + 1}: {c.description}")
            for o in c.outcomes:
                band = "" if o.sigma is None else f" +/- {o.sigma:.3g}"
                flag = "  !! beyond 3 sigma" if o.flagged else ""
                lines.append(
                    f"    {o.label:<16} {o.count}/{mc.n} = {o.frequency:.6g}  (exact {o.analytic:.6g}{band}){flag}"
                )
        if mc.trajectories is not None:
            for t in mc.trajectories:
                recs = " ".join(f"{k}={v}" for k, v in t.records) or "-"
                reads = " ".join(v for _, v in t.readouts)
                lines.append(f"    run {t.run_index}: {recs} | {reads}")
    verdict = "all CONSISTENT" if r.consistent else "INCONSISTENT"
    lines.append(verdict)
    return "\n".join(lines) + "\n"
