"""Reduction policies: who, if anyone, gets a collapsed state.

``UnitaryOnly`` never collapses. A measurement event is then nothing more
than the correlation already built by earlier unitaries, so it is a no-op.
A signal conditioned on its record becomes the coherent controlled unitary
``sum_o P_o (x) U_o``. No outcomes exist at all.

``CollapseAt(agents)`` is a movable cut. Measurements performed by the
listed agents project the state and produce records. Everyone else's
measurements stay coherent, exactly as under ``UnitaryOnly``.

Evaluation enumerates every outcome branch once. The branches give the
exact (Born-weighted) ensemble and the flat outcome tree that the Monte
Carlo kernel walks.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .errors import InvalidPolicy, InvalidScenario, PolicyHasNoOutcomes, TooManyBranches
from .hilbert import (
    MeasurementBasis,
    PureState,
    alive_mask,
    apply_unitary,
    born_probabilities,
    collapse,
    from_target_matrix,
    sample_outcome,
    to_target_matrix,
)
from .mixtures import (
    DensityOperator,
    Ensemble,
    ProperFromEnsemble,
    density_from_pure,
    proper_mixture_from_ensemble,
    reduce_to,
)
from .rng import SplitMix64
from .scenarios import MeasureEvent, NoopEvent, Scenario, SignalEvent, UnitaryEvent, validate_scenario

MAX_BRANCHES = 1 << 16
MAX_LISTED_TRAJECTORIES = 100


@dataclass(frozen=True)
class UnitaryOnly:
    def collapses(self, agent: str) -> bool:
        return False

    def __str__(self) -> str:
        return "unitary_only"


@dataclass(frozen=True)
class CollapseAt:
    agents: tuple[str, ...]

    def __post_init__(self):
        if not self.agents:
            raise InvalidPolicy("collapse_at needs at least one agent")

    def collapses(self, agent: str) -> bool:
        return agent in self.agents

    def __str__(self) -> str:
        return "collapse_at:" + ",".join(self.agents)


Policy = Union[UnitaryOnly, CollapseAt]

_AGENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def parse_policy(text: str) -> Policy:
    """``unitary_only`` or ``collapse_at:AGENT[,AGENT...]``."""
    text = text.strip()
    if text == "unitary_only":
        return UnitaryOnly()
    if text.startswith("collapse_at:"):
        names = [n.strip() for n in text[len("collapse_at:") :].split(",")]
        if not names or not all(_AGENT_RE.match(n) for n in names):
            raise InvalidPolicy(f"bad agent list in policy {text!r}")
        return CollapseAt(tuple(dict.fromkeys(names)))
    raise InvalidPolicy(f"unknown policy {text!r}; expected unitary_only or collapse_at:AGENT[,AGENT...]")


def parse_policies(text: str) -> list[Policy]:
    """Split a comma list of policies.

    A bare name following ``collapse_at:X`` extends that policy's agent set,
    so ``collapse_at:Alice,Bob`` is one policy while
    ``unitary_only,collapse_at:F`` is two. ``;`` always separates policies.
    """
    groups: list[list[str]] = []
    for chunk in text.split(";"):
        for item in chunk.split(","):
            item = item.strip()
            if not item:
                continue
            if item == "unitary_only" or item.startswith("collapse_at:") or not groups:
                groups.append([item])
            elif groups[-1][0].startswith("collapse_at:"):
                groups[-1].append(item)
            else:
                raise InvalidPolicy(f"stray name {item!r} after {groups[-1][0]!r}")
        groups.append([])  # ';' closes the current group
    return [parse_policy(",".join(g)) for g in groups if g]


def as_policy(p: Policy | str) -> Policy:
    return parse_policy(p) if isinstance(p, str) else p


def check_policy(s: Scenario, policy: Policy) -> None:
    for name in getattr(policy, "agents", ()):
        if name not in s.agent_names:
            raise InvalidPolicy(f"policy {policy} names undeclared agent {name!r}")


def _require_valid(s: Scenario) -> None:
    issues = validate_scenario(s)
    if issues:
        raise InvalidScenario(issues)


# -- branch enumeration -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Branch:
    prob: float
    records: tuple[tuple[str, str], ...]
    state: PureState
    node: int


def _apply_coherent_signal(
    state: PureState, measure: MeasureEvent, basis: MeasurementBasis, ev: SignalEvent, op
) -> PureState:
    # psi + ((U - I) on signal targets) P_outcome psi; avoids building the
    # full controlled unitary on (measured targets + signal targets).
    reg = state.register
    i = basis.labels.index(ev.outcome)
    m = to_target_matrix(state.amps.reshape(-1, 1), reg, measure.targets)
    selected = from_target_matrix(basis.project(i, m), reg, measure.targets).reshape(-1)
    s = to_target_matrix(selected.reshape(-1, 1), reg, ev.targets)
    delta = from_target_matrix(op.matrix @ s - s, reg, ev.targets).reshape(-1)
    out = state.amps + delta
    out.setflags(write=False)
    return PureState(reg, out)


@dataclass
class _Tree:
    node_child_start: list[int] = field(default_factory=lambda: [0])
    node_child_count: list[int] = field(default_factory=lambda: [0])
    child_node: list[int] = field(default_factory=list)
    child_prob: list[float] = field(default_factory=list)
    child_alive: list[int] = field(default_factory=list)

    def split(self, node: int, probs: list[float], alive: list[bool]) -> list[int]:
        self.node_child_start[node] = len(self.child_node)
        self.node_child_count[node] = len(probs)
        ids = []
        for p, a in zip(probs, alive):
            nid = -1
            if a:
                nid = len(self.node_child_start)
                self.node_child_start.append(0)
                self.node_child_count.append(0)
            ids.append(nid)
            self.child_node.append(nid)
            self.child_prob.append(p)
            self.child_alive.append(1 if a else 0)
        return ids


@dataclass(frozen=True, eq=False)
class Evolution:
    """All branches of a scenario under a policy, snapshotted after every event.

    ``steps[0]`` is the initial state and ``steps[k + 1]`` follows event ``k``.
    Leaves are the final branches, in enumeration order.
    """

    scenario: Scenario
    policy: Policy
    steps: tuple[tuple[Branch, ...], ...]
    active: tuple[bool, ...]
    arrays: dict

    @property
    def leaves(self) -> tuple[Branch, ...]:
        return self.steps[-1]

    def global_state(self, step: int = -1) -> DensityOperator:
        return _mixture(self.steps[step])


def _mixture(branches) -> DensityOperator:
    if len(branches) == 1:
        return density_from_pure(branches[0].state)
    total = sum(b.prob for b in branches)
    return proper_mixture_from_ensemble(Ensemble(tuple((b.prob / total, b.state) for b in branches)))


def measurement_active(policy: Policy, ev: MeasureEvent) -> bool:
    return policy.collapses(ev.agent)


@functools.lru_cache(maxsize=32)
def evolve(s: Scenario, policy: Policy) -> Evolution:
    _require_valid(s)
    check_policy(s, policy)
    reg = s.register
    measures = s.measurements()
    bases = {r: m.basis.build(reg, m.targets) for r, m in measures.items()}
    tree = _Tree()
    branches = (Branch(1.0, (), s.initial_state(), 0),)
    steps = [branches]
    active = []
    for ev in s.events:
        if isinstance(ev, UnitaryEvent):
            op = ev.gate.operator(reg.sub(ev.targets))
            branches = tuple(Branch(b.prob, b.records, apply_unitary(b.state, op, ev.targets), b.node) for b in branches)
            active.append(False)
        elif isinstance(ev, MeasureEvent):
            is_active = measurement_active(policy, ev)
            active.append(is_active)
            if is_active:
                basis = bases[ev.record]
                nxt = []
                for b in branches:
                    probs = [float(x) for x in born_probabilities(b.state, basis)]
                    alive = alive_mask(probs)
                    ids = tree.split(b.node, probs, alive)
                    for i, nid in enumerate(ids):
                        if nid >= 0:
                            nxt.append(
                                Branch(
                                    b.prob * probs[i],
                                    b.records + ((ev.record, basis.labels[i]),),
                                    collapse(b.state, basis, i),
                                    nid,
                                )
                            )
                if len(nxt) > MAX_BRANCHES:
                    raise TooManyBranches(f"more than {MAX_BRANCHES} outcome branches")
                branches = tuple(nxt)
        elif isinstance(ev, SignalEvent):
            op = ev.gate.operator(reg.sub(ev.targets))
            source = measures[ev.record]
            classical = measurement_active(policy, source)
            active.append(classical)
            nxt = []
            for b in branches:
                if classical:
                    fired = dict(b.records).get(ev.record) == ev.outcome
                    state = apply_unitary(b.state, op, ev.targets) if fired else b.state
                else:
                    state = _apply_coherent_signal(b.state, source, bases[ev.record], ev, op)
                nxt.append(Branch(b.prob, b.records, state, b.node))
            branches = tuple(nxt)
        elif isinstance(ev, NoopEvent):
            active.append(False)
        steps.append(branches)

    arrays = _flatten(tree, branches, s)
    return Evolution(s, policy, tuple(steps), tuple(active), arrays)


def _flatten(tree: _Tree, leaves, s: Scenario) -> dict:
    node_leaf = np.full(len(tree.node_child_start), -1, dtype=np.int64)
    for i, b in enumerate(leaves):
        node_leaf[b.node] = i
    readout_checks = [i for i, c in enumerate(s.checks) if c.readout_basis(s.register) is not None]
    starts, counts, probs, alive, labels = [], [], [], [], []
    for b in leaves:
        for ci in readout_checks:
            basis = s.checks[ci].readout_basis(s.register)
            p = [float(x) for x in born_probabilities(b.state, basis)]
            starts.append(len(probs))
            counts.append(len(p))
            probs.extend(p)
            alive.extend(1 if a else 0 for a in alive_mask(p))
    for ci in readout_checks:
        labels.append(s.checks[ci].readout_basis(s.register).labels)
    return {
        "node_child_start": np.array(tree.node_child_start, dtype=np.int64),
        "node_child_count": np.array(tree.node_child_count, dtype=np.int64),
        "node_leaf": node_leaf,
        "child_node": np.array(tree.child_node, dtype=np.int64),
        "child_prob": np.array(tree.child_prob, dtype=np.float64),
        "child_alive": np.array(tree.child_alive, dtype=np.uint8),
        "readout_checks": tuple(readout_checks),
        "readout_labels": tuple(labels),
        "readout_start": np.array(starts, dtype=np.int64),
        "readout_count": np.array(counts, dtype=np.int64),
        "readout_prob": np.array(probs, dtype=np.float64),
        "readout_alive": np.array(alive, dtype=np.uint8),
    }


# -- state assignments ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateAssignment:
    """One agent's state assignment at every step (index 0 = before any event).

    Under ``UnitaryOnly`` an agent measuring something also gets ``fictional``:
    the collapsed assignment it would have made had it been allowed to.
    """

    agent: str
    states: tuple[DensityOperator, ...]
    records: tuple[str, ...]
    fictional: tuple[DensityOperator, ...] | None = None

    @property
    def final(self) -> DensityOperator:
        return self.states[-1]


def _known_records(s: Scenario, policy: Policy, agent: str) -> tuple[str, ...]:
    return tuple(
        e.record for e in s.events if isinstance(e, MeasureEvent) and e.agent == agent and policy.collapses(agent)
    )


def _view(branches, observes) -> DensityOperator:
    mixed = _mixture(branches)
    rho = reduce_to(mixed, observes)
    if isinstance(mixed.provenance, ProperFromEnsemble):
        # an average over recorded outcomes stays an ignorance mixture
        return DensityOperator(rho.register, rho.factor, mixed.provenance)
    return rho


def _views(evo: Evolution, observes) -> tuple[DensityOperator, ...]:
    return tuple(_view(branches, observes) for branches in evo.steps)


def assign_states(s: Scenario, p: Policy | str) -> dict[str, StateAssignment]:
    policy = as_policy(p)
    evo = evolve(s, policy)
    out = {}
    for agent in s.agents:
        fictional = None
        measures = any(isinstance(e, MeasureEvent) and e.agent == agent.name for e in s.events)
        if isinstance(policy, UnitaryOnly) and measures:
            fictional = _views(evolve(s, CollapseAt((agent.name,))), agent.observes)
        out[agent.name] = StateAssignment(
            agent.name, _views(evo, agent.observes), _known_records(s, policy, agent.name), fictional
        )
    return out


# -- trajectories -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    seed: int
    run_index: int
    records: tuple[tuple[str, str], ...]
    readouts: tuple[tuple[int, str], ...]
    final_state: PureState
    known: dict = field(default_factory=dict)

    def record(self, label: str) -> str | None:
        return dict(self.records).get(label)

    def readout(self, check_index: int) -> str | None:
        return dict(self.readouts).get(check_index)


def _known(s: Scenario, policy: Policy, records) -> dict[str, tuple[tuple[str, str], ...]]:
    rec = dict(records)
    known = {}
    for agent in s.agents:
        items = [(r, rec[r]) for r in _known_records(s, policy, agent.name) if r in rec]
        for e in s.events:
            if isinstance(e, SignalEvent) and e.record in rec and set(e.targets) <= set(agent.observes):
                fired = rec[e.record] == e.outcome
                items.append((f"signal[{e.record}=={e.outcome}]", "fired" if fired else "idle"))
        known[agent.name] = tuple(items)
    return known


def run_trajectory(s: Scenario, p: Policy | str, seed: int, run_index: int = 0) -> Trajectory:
    """Walk the events once, sampling every policy-active measurement.

    The stream is ``SplitMix64.for_run(seed, run_index)``: one draw per active
    measurement, then one per sampled check readout, in check order.
    """
    policy = as_policy(p)
    _require_valid(s)
    check_policy(s, policy)
    reg = s.register
    rng = SplitMix64.for_run(seed, run_index)
    measures = s.measurements()
    bases = {r: m.basis.build(reg, m.targets) for r, m in measures.items()}
    state = s.initial_state()
    records: list[tuple[str, str]] = []
    for ev in s.events:
        if isinstance(ev, UnitaryEvent):
            state = apply_unitary(state, ev.gate.operator(reg.sub(ev.targets)), ev.targets)
        elif isinstance(ev, MeasureEvent) and measurement_active(policy, ev):
            label, state = sample_outcome(state, bases[ev.record], rng)
            records.append((ev.record, label))
        elif isinstance(ev, SignalEvent):
            op = ev.gate.operator(reg.sub(ev.targets))
            source = measures[ev.record]
            if measurement_active(policy, source):
                if dict(records).get(ev.record) == ev.outcome:
                    state = apply_unitary(state, op, ev.targets)
            else:
                state = _apply_coherent_signal(state, source, bases[ev.record], ev, op)
    readouts = []
    for ci, c in enumerate(s.checks):
        basis = c.readout_basis(reg)
        if basis is not None:
            probs = [float(x) for x in born_probabilities(state, basis)]
            readouts.append((ci, basis.labels[kernels.pick(probs, alive_mask(probs), rng.uniform())]))
    records_t = tuple(records)
    return Trajectory(seed, run_index, records_t, tuple(readouts), state, _known(s, policy, records_t))


@dataclass(frozen=True, eq=False)
class Batch:
    """Result of ``sample_runs``: leaf index per run and readout indices per run."""

    evolution: Evolution
    seed: int
    start: int
    leaves: np.ndarray
    readouts: np.ndarray

    def __len__(self) -> int:
        return len(self.leaves)

    def trajectory(self, r: int) -> Trajectory:
        evo = self.evolution
        leaf = evo.leaves[int(self.leaves[r])]
        checks = evo.arrays["readout_checks"]
        labels = evo.arrays["readout_labels"]
        readouts = tuple((ci, labels[k][int(self.readouts[r, k])]) for k, ci in enumerate(checks))
        s = evo.scenario
        return Trajectory(self.seed, self.start + r, leaf.records, readouts, leaf.state, _known(s, evo.policy, leaf.records))


def sample_runs(s: Scenario, p: Policy | str, n: int, seed: int, start: int = 0) -> Batch:
    """Runs ``start .. start + n - 1`` via the outcome-tree kernel.

    Run ``r`` here equals ``run_trajectory(s, p, seed, r)`` outcome for
    outcome; only the walk is batched.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    evo = evolve(s, as_policy(p))
    a = evo.arrays
    n_read = len(a["readout_checks"])
    out_leaf = np.zeros(n, dtype=np.int64)
    out_read = np.zeros(n * n_read, dtype=np.int64)
    kernels.walk_batch(
        seed & 0xFFFFFFFFFFFFFFFF,
        start,
        n,
        a["node_child_start"],
        a["node_child_count"],
        a["node_leaf"],
        a["child_node"],
        a["child_prob"],
        a["child_alive"],
        n_read,
        a["readout_start"],
        a["readout_count"],
        a["readout_prob"],
        a["readout_alive"],
        out_leaf,
        out_read,
    )
    return Batch(evo, seed, start, out_leaf, out_read.reshape(n, n_read))


def exact_ensemble(s: Scenario, p: Policy | str) -> Ensemble:
    """Final collapsed states weighted by their Born probabilities."""
    policy = as_policy(p)
    if isinstance(policy, UnitaryOnly):
        raise PolicyHasNoOutcomes("unitary_only produces no measurement outcomes")
    leaves = evolve(s, policy).leaves
    total = sum(b.prob for b in leaves)
    return Ensemble(tuple((b.prob / total, b.state) for b in leaves))


def ensemble_over_runs(s: Scenario, p: Policy | str, n: int, seed: int) -> Ensemble:
    """Empirical ensemble of final states over ``n`` seeded runs (frequencies as weights)."""
    policy = as_policy(p)
    if isinstance(policy, UnitaryOnly):
        raise PolicyHasNoOutcomes("unitary_only produces no measurement outcomes")
    if n < 1:
        raise ValueError("n must be >= 1")
    batch = sample_runs(s, policy, n, seed)
    counts = np.bincount(batch.leaves, minlength=len(batch.evolution.leaves))
    leaves = batch.evolution.leaves
    return Ensemble(tuple((int(c) / n, leaves[i].state) for i, c in enumerate(counts) if c))
