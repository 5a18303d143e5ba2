"""Event-sequence model of nested-observer experiments and the built-in
scenarios.

A scenario is plain immutable data: a register, the agents and the labels
each can see, a product of initial state factors, an ordered event list and
the checks to evaluate at the end. How measurements act (collapse or mere
correlation) is decided later by a policy, not here.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InvalidBasis, TooLarge, WignerLabError
from .hilbert import (
    EPS_NORM,
    RENORM_SLACK,
    MeasurementBasis,
    Operator,
    PureState,
    Register,
    basis_from_isometries,
    bell_basis,
    computational_basis,
    from_amplitudes,
    make_register,
    make_unitary,
    named_unitary,
    product_basis,
    spin_basis,
    tensor_product,
    total_spin_squared,
    total_spin_z,
)
from .numfmt import format_float

DEFAULT_TOL = 1e-9
OBSERVABLES = ("S2", "SZ")
CHECK_KINDS = ("outcome", "distribution", "definite", "witness")


@dataclass(frozen=True)
class BasisSpec:
    """Recipe for a measurement basis, independent of any register.

    ``kind`` is ``computational``, ``bell``, ``spin`` (one qubit, polar angle
    ``theta``) or ``product`` (one factor per target, in target order).
    """

    kind: str
    theta: float = 0.0
    factors: tuple["BasisSpec", ...] = ()

    def build(self, register: Register, targets) -> MeasurementBasis:
        targets = register.check_targets(targets)
        if self.kind == "computational":
            return computational_basis(register, targets)
        if self.kind == "bell":
            if any(register.dim(t) != 2 for t in targets):
                raise InvalidBasis("bell basis needs qubit targets")
            return bell_basis(targets)
        if self.kind == "spin":
            if len(targets) != 1 or register.dim(targets[0]) != 2:
                raise InvalidBasis("spin basis needs exactly one qubit target")
            return spin_basis(targets[0], self.theta)
        if self.kind == "product":
            if len(self.factors) != len(targets):
                raise InvalidBasis(f"{len(self.factors)} basis factors for {len(targets)} targets")
            return product_basis([f.build(register, (t,)) for f, t in zip(self.factors, targets)])
        raise InvalidBasis(f"unknown basis kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == "spin":
            return f"spin({format_float(self.theta)})"
        if self.kind == "product":
            return "*".join(str(f) for f in self.factors)
        return self.kind


COMPUTATIONAL = BasisSpec("computational")
BELL = BasisSpec("bell")


def spin(theta: float) -> BasisSpec:
    return BasisSpec("spin", float(theta))


def product(*factors: BasisSpec) -> BasisSpec:
    return BasisSpec("product", 0.0, tuple(factors))


@dataclass(frozen=True)
class GateSpec:
    """A named built-in unitary, or ``MATRIX`` with a literal matrix."""

    name: str
    matrix: tuple[tuple[complex, ...], ...] | None = None

    def operator(self, register: Register) -> Operator:
        if self.name == "MATRIX":
            return make_unitary(register, np.array(self.matrix, dtype=complex), "MATRIX")
        return named_unitary(self.name, register)


@dataclass(frozen=True)
class UnitaryEvent:
    gate: GateSpec
    targets: tuple[str, ...]


@dataclass(frozen=True)
class MeasureEvent:
    agent: str
    basis: BasisSpec
    targets: tuple[str, ...]
    record: str


@dataclass(frozen=True)
class SignalEvent:
    """Apply ``gate`` on ``targets`` when measurement ``record`` gave ``outcome``."""

    record: str
    outcome: str
    gate: GateSpec
    targets: tuple[str, ...]


@dataclass(frozen=True)
class NoopEvent:
    pass


Event = Union[UnitaryEvent, MeasureEvent, SignalEvent, NoopEvent]


@dataclass(frozen=True)
class Check:
    kind: str
    targets: tuple[str, ...]
    agents: tuple[str, ...]
    tol: float = DEFAULT_TOL
    basis: BasisSpec | None = None
    value: int | None = None
    observable: str | None = None

    def readout_basis(self, register: Register) -> MeasurementBasis | None:
        """Basis sampled for this check at the end of a trajectory, if any."""
        if self.kind == "outcome":
            (target,) = self.targets
            d = register.dim(target)
            hit = np.zeros(d, dtype=complex)
            hit[self.value] = 1.0
            return basis_from_isometries(
                (target,),
                (d,),
                [(f"{target}=={self.value}", hit), (f"{target}!={self.value}", None)],
                "outcome",
            )
        if self.kind == "distribution":
            return self.basis.build(register, self.targets)
        return None

    def describe(self) -> str:
        where = ",".join(self.targets)
        if self.kind == "outcome":
            return f"outcome {where}=={self.value}"
        if self.kind == "definite":
            return f"definite {self.observable} on {where}"
        return f"{self.kind} {self.basis} on {where}"

    def observable_on(self, register: Register) -> Operator:
        sub = register.sub(self.targets)
        return total_spin_squared(sub) if self.observable == "S2" else total_spin_z(sub)


@dataclass(frozen=True)
class Agent:
    name: str
    observes: tuple[str, ...]


@dataclass(frozen=True)
class StateFactor:
    labels: tuple[str, ...]
    amps: tuple[complex, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    register: Register
    agents: tuple[Agent, ...]
    initial: tuple[StateFactor, ...]
    events: tuple[Event, ...] = ()
    checks: tuple[Check, ...] = ()
    policies: tuple[str, ...] = ()

    def agent(self, name: str) -> Agent:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def agent_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.agents)

    def measurements(self) -> dict[str, MeasureEvent]:
        return {e.record: e for e in self.events if isinstance(e, MeasureEvent)}

    def initial_state(self) -> PureState:
        return _initial_state(self.register, self.initial)


@functools.lru_cache(maxsize=64)
def _initial_state(register: Register, factors: tuple[StateFactor, ...]) -> PureState:
    state = None
    for f in factors:
        part = from_amplitudes(register.sub(f.labels), f.amps)
        state = part if state is None else tensor_product(state, part)
    # permute the factor order into register order
    order = [state.register.index(label) for label in register.labels]
    amps = np.transpose(state.tensor(), order).reshape(-1)
    amps.setflags(write=False)
    return PureState(register, amps)


def normalized_factor(labels, amps) -> StateFactor:
    """Normalize with the same rule as ``from_amplitudes`` and freeze."""
    v = np.array(amps, dtype=complex)
    n2 = float(np.vdot(v, v).real)
    if n2 > 0 and abs(n2 - 1.0) > RENORM_SLACK:
        v = v / math.sqrt(n2)
    return StateFactor(tuple(labels), tuple(complex(x) for x in v))


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioIssue:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def _gate_issue(gate: GateSpec, register: Register, targets) -> str | None:
    try:
        gate.operator(register.sub(targets))
    except (WignerLabError, ValueError) as exc:
        return str(exc)
    return None


def validate_scenario(s: Scenario) -> list[ScenarioIssue]:
    """Every structural problem in ``s``; an empty list means valid."""
    issues: list[ScenarioIssue] = []

    def add(code: str, message: str) -> None:
        issues.append(ScenarioIssue(code, message))

    reg = s.register
    labels = set(reg.labels)

    def bad_targets(where: str, targets) -> bool:
        if not targets:
            add("unknown target", f"{where}: no targets")
            return True
        if len(set(targets)) != len(targets):
            add("duplicate target", f"{where}: repeated target in {','.join(targets)}")
            return True
        missing = [t for t in targets if t not in labels]
        for t in missing:
            add("unknown target", f"{where}: unknown subsystem {t!r}")
        return bool(missing)

    names = [a.name for a in s.agents]
    for n in sorted({n for n in names if names.count(n) > 1}):
        add("duplicate agent", f"agent {n!r} declared more than once")
    for a in s.agents:
        bad_targets(f"agent {a.name}", a.observes)

    covered: list[str] = []
    for f in s.initial:
        if bad_targets("STATE", f.labels):
            continue
        covered.extend(f.labels)
        dim = math.prod(reg.dim(t) for t in f.labels)
        if len(f.amps) != dim:
            add("bad state", f"STATE {','.join(f.labels)}: {len(f.amps)} amplitudes for dimension {dim}")
            continue
        n2 = sum(abs(a) ** 2 for a in f.amps)
        if abs(n2 - 1.0) > EPS_NORM:
            add("bad state", f"STATE {','.join(f.labels)}: norm^2 {n2!r} != 1")
    for t in reg.labels:
        c = covered.count(t)
        if c == 0:
            add("missing state", f"subsystem {t!r} has no STATE")
        elif c > 1:
            add("duplicate state", f"subsystem {t!r} has more than one STATE")

    records: dict[str, tuple[MeasureEvent, MeasurementBasis | None]] = {}
    for i, e in enumerate(s.events):
        where = f"event {i + 1}"
        if isinstance(e, UnitaryEvent):
            if not bad_targets(where, e.targets):
                msg = _gate_issue(e.gate, reg, e.targets)
                if msg:
                    add("bad unitary", f"{where}: {msg}")
        elif isinstance(e, MeasureEvent):
            if e.agent not in names:
                add("unknown agent", f"{where}: measuring agent {e.agent!r} is not declared")
            basis = None
            if not bad_targets(where, e.targets):
                try:
                    basis = e.basis.build(reg, e.targets)
                except (WignerLabError, ValueError) as exc:
                    add("bad basis", f"{where}: {exc}")
            if e.record in records:
                add("duplicate record", f"{where}: record {e.record!r} already defined")
            else:
                records[e.record] = (e, basis)
        elif isinstance(e, SignalEvent):
            if e.record not in records:
                add("unknown record", f"{where}: signal refers to unknown record {e.record!r}")
            else:
                m, basis = records[e.record]
                if basis is not None and e.outcome not in basis.labels:
                    add("unknown outcome", f"{where}: {e.outcome!r} is not an outcome of record {e.record!r}")
                if set(m.targets) & set(e.targets):
                    add("signal overlap", f"{where}: signal targets overlap measured targets of {e.record!r}")
            if not bad_targets(where, e.targets):
                msg = _gate_issue(e.gate, reg, e.targets)
                if msg:
                    add("bad unitary", f"{where}: {msg}")

    for i, c in enumerate(s.checks):
        where = f"check {i + 1}"
        if c.kind not in CHECK_KINDS:
            add("bad check", f"{where}: unknown kind {c.kind!r}")
            continue
        if not c.agents:
            add("bad check", f"{where}: no agents")
        if not (c.tol > 0) or not math.isfinite(c.tol):
            add("bad check", f"{where}: tolerance must be positive")
        if bad_targets(where, c.targets):
            continue
        for name in c.agents:
            if name not in names:
                add("unknown agent", f"{where}: agent {name!r} is not declared")
                continue
            unseen = [t for t in c.targets if t not in s.agent(name).observes]
            if unseen:
                add("unobserved target", f"{where}: agent {name!r} does not observe {','.join(unseen)}")
        if c.kind == "outcome":
            if len(c.targets) != 1:
                add("bad check", f"{where}: outcome check takes one subsystem")
            elif c.value is None or not 0 <= c.value < reg.dim(c.targets[0]):
                add("bad check", f"{where}: outcome value {c.value!r} out of range")
        elif c.kind in ("distribution", "witness"):
            if c.basis is None:
                add("bad check", f"{where}: missing basis")
            else:
                try:
                    c.basis.build(reg, c.targets)
                except (WignerLabError, ValueError) as exc:
                    add("bad basis", f"{where}: {exc}")
        elif c.kind == "definite":
            if c.observable not in OBSERVABLES:
                add("bad check", f"{where}: unknown observable {c.observable!r}")
            elif any(reg.dim(t) != 2 for t in c.targets):
                add("bad check", f"{where}: {c.observable} needs qubit targets")

    from .policies import parse_policy  # late import: policies depends on this module

    for text in s.policies:
        try:
            pol = parse_policy(text)
        except WignerLabError as exc:
            add("bad policy", str(exc))
            continue
        for name in getattr(pol, "agents", ()):
            if name not in names:
                add("bad policy", f"policy {text!r} names undeclared agent {name!r}")
    return issues


# -- built-in scenarios -----------------------------------------------------

_R = math.sqrt(0.5)
_PLUS = (complex(_R), complex(_R))
_ZERO = (1 + 0j, 0j)


def _qubits(*labels: str) -> Register:
    return make_register([(label, 2) for label in labels])


def build_epr_bell(theta: float = 0.0) -> Scenario:
    """m = 0 triplet on (A, B); Alice measures z on A, Bob spin-theta on B."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    return Scenario(
        name="epr_bell",
        register=_qubits("A", "B"),
        agents=(Agent("Alice", ("A",)), Agent("Bob", ("B",)), Agent("Walter", ("A", "B"))),
        initial=(StateFactor(("A", "B"), (0j, complex(_R), complex(_R), 0j)),),
        events=(
            MeasureEvent("Alice", spin(0.0), ("A",), "mA"),
            MeasureEvent("Bob", spin(theta), ("B",), "mB"),
        ),
        checks=(
            Check("definite", ("A", "B"), ("Walter",), observable="S2"),
            Check("distribution", ("A", "B"), ("Walter",), basis=product(spin(0.0), spin(theta))),
        ),
    )


def build_wigners_friend() -> Scenario:
    """Friend F reads spin S through device D; W describes the whole lab."""
    return Scenario(
        name="wigners_friend",
        register=_qubits("S", "D", "F"),
        agents=(Agent("F", ("S",)), Agent("W", ("S", "D", "F"))),
        initial=(StateFactor(("S",), _PLUS), StateFactor(("D",), _ZERO), StateFactor(("F",), _ZERO)),
        events=(
            UnitaryEvent(GateSpec("CORRELATE"), ("S", "D")),
            UnitaryEvent(GateSpec("CORRELATE"), ("D", "F")),
            MeasureEvent("F", COMPUTATIONAL, ("S",), "mF"),
        ),
        checks=(
            Check("distribution", ("S",), ("F", "W"), basis=COMPUTATIONAL),
            Check("distribution", ("S", "D", "F"), ("W",), basis=BELL),
        ),
    )


def build_molecule_toy() -> Scenario:
    """Molecule F with memory pair (A, B) and receiver C; W signals on PhiPlus."""
    return Scenario(
        name="molecule_toy",
        register=_qubits("A", "B", "C"),
        agents=(Agent("F", ("A", "B", "C")), Agent("W", ("A", "B", "C"))),
        initial=(StateFactor(("A",), _PLUS), StateFactor(("B",), _ZERO), StateFactor(("C",), _ZERO)),
        events=(
            UnitaryEvent(GateSpec("CORRELATE"), ("A", "B")),
            MeasureEvent("F", COMPUTATIONAL, ("A", "B"), "mF"),
            MeasureEvent("W", BELL, ("A", "B"), "mW"),
            SignalEvent("mW", "PhiPlus", GateSpec("FLIP"), ("C",)),
        ),
        checks=(Check("outcome", ("C",), ("F", "W"), value=1),),
    )


MAX_ENV = 10


def build_decoherence_demo(n_env: int = 4) -> Scenario:
    """``molecule_toy`` with ``n_env`` environment qubits copying B."""
    if n_env != int(n_env) or n_env < 0:
        raise ValueError("n_env must be a non-negative integer")
    if n_env > MAX_ENV:
        raise TooLarge(f"n_env={n_env} exceeds {MAX_ENV}")
    if n_env == 0:
        return build_molecule_toy()
    env = tuple(f"E{k}" for k in range(1, n_env + 1))
    return Scenario(
        name="decoherence_demo",
        register=_qubits("A", "B", "C", *env),
        agents=(Agent("F", ("A", "B", "C")), Agent("W", ("A", "B", "C") + env)),
        initial=(StateFactor(("A",), _PLUS), StateFactor(("B",), _ZERO), StateFactor(("C",), _ZERO))
        + tuple(StateFactor((e,), _ZERO) for e in env),
        events=(UnitaryEvent(GateSpec("CORRELATE"), ("A", "B")),)
        + tuple(UnitaryEvent(GateSpec("CORRELATE"), ("B", e)) for e in env)
        + (
            MeasureEvent("F", COMPUTATIONAL, ("A", "B"), "mF"),
            MeasureEvent("W", BELL, ("A", "B") + env, "mW"),
            SignalEvent("mW", "PhiPlus", GateSpec("FLIP"), ("C",)),
        ),
        checks=(
            Check("witness", ("A", "B"), ("F", "W"), basis=COMPUTATIONAL),
            Check("distribution", ("A", "B") + env, ("W",), basis=BELL),
            Check("outcome", ("C",), ("F", "W"), value=1),
        ),
    )


@dataclass(frozen=True)
class Builtin:
    name: str
    build: Callable[..., Scenario]
    summary: str
    default_policies: tuple[str, ...] = ("unitary_only",)


BUILTINS: dict[str, Builtin] = {
    b.name: b
    for b in (
        Builtin(
            "epr_bell",
            build_epr_bell,
            "m=0 spin triplet; Alice measures z, Bob measures along theta; "
            "Walter compares the entangled state with the collapsed product states",
            ("unitary_only", "collapse_at:Alice,Bob"),
        ),
        Builtin(
            "wigners_friend",
            build_wigners_friend,
            "friend reads spin S via device D; the super-observer assigns the "
            "entangled S-D-F lab state whose S marginal is maximally mixed",
            ("unitary_only", "collapse_at:F"),
        ),
        Builtin(
            "molecule_toy",
            build_molecule_toy,
            "molecule correlates A with memory B; a Bell measurement on A,B "
            "excites C on PhiPlus (photon every run vs half the runs)",
            ("unitary_only", "collapse_at:F"),
        ),
        Builtin(
            "decoherence_demo",
            build_decoherence_demo,
            "molecule_toy plus environment qubits copying B; A,B coherence "
            "vanishes but the full-register Bell sector keeps it",
            ("unitary_only", "collapse_at:F"),
        ),
    )
}


def builtin(name: str, **params) -> Scenario:
    if name not in BUILTINS:
        raise KeyError(f"unknown built-in scenario {name!r}")
    return BUILTINS[name].build(**params)
