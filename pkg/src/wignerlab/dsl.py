"""Plain-text ``.scn`` scenario format.

One statement per line, ``#`` starts a comment::

    SCENARIO name
    SYSTEM label dim=N
    AGENT name observes L1 L2 ...
    STATE L[,L...] amp|k> + amp|k> ...
    EVENT unitary GATE T1 [T2 ...]
    EVENT measure AGENT basis=B targets=T1,T2 record=R
    EVENT signal when R==OUTCOME apply GATE T1 [T2 ...]
    EVENT noop
    CHECK outcome T==v agents=A,B [tol=x]
    CHECK distribution basis=B targets=T1,T2 agents=A,B [tol=x]
    CHECK definite S2|SZ targets=T1,T2 agents=A [tol=x]
    CHECK witness basis=B targets=T1,T2 agents=A [tol=x]
    POLICY unitary_only | collapse_at:A[,B...]

Gates are IDENT, HADAMARD, FLIP, CORRELATE or ``MATRIX[a,b;c,d]``. Bases are
``computational``, ``bell``, ``spin(theta)`` or a ``*``-joined product of one
factor per target. Amplitudes are bare reals or ``(re+imi)``.

Parsing never raises on bad input. Each line is handled on its own and every
problem becomes a ``ParseDiagnostic``, so one bad line does not hide the next.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import WignerLabError
from .hilbert import EPS_NORM, NAMED_UNITARIES, Register, make_register
from .numfmt import format_float
from .scenarios import (
    CHECK_KINDS,
    DEFAULT_TOL,
    OBSERVABLES,
    Agent,
    BasisSpec,
    Check,
    GateSpec,
    MeasureEvent,
    NoopEvent,
    Scenario,
    SignalEvent,
    StateFactor,
    UnitaryEvent,
    normalized_factor,
    validate_scenario,
)

KEYWORDS = ("SCENARIO", "SYSTEM", "AGENT", "STATE", "EVENT", "CHECK", "POLICY")
EVENT_KINDS = ("unitary", "measure", "signal", "noop")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_REAL = re.compile(rf"[+-]?{_NUM}\Z")
_COMPLEX = re.compile(rf"\(\s*([+-]?{_NUM})\s*([+-])\s*({_NUM})\s*i\s*\)")
_LEADING_NUM = re.compile(_NUM)
_SPIN = re.compile(rf"spin\(\s*([+-]?{_NUM})\s*\)\Z")
_LABEL = re.compile(r"[A-Za-z0-9_.]+\Z")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1


@dataclass(frozen=True)
class ParseDiagnostic:
    span: SourceSpan
    severity: str  # "error" | "warning"
    message: str
    hint: str = ""

    def format(self, path: str = "<input>") -> str:
        text = f"{path}:{self.span.line}:{self.span.column}: {self.severity}: {self.message}"
        return text + (f" (expected {self.hint})" if self.hint else "")


class _LineError(Exception):
    def __init__(self, column: int, length: int, message: str, hint: str = ""):
        super().__init__(message)
        self.column, self.length, self.message, self.hint = column, length, message, hint


@dataclass(frozen=True)
class _Tok:
    text: str
    col: int  # 1-based


def _tokenize(line: str) -> list[_Tok]:
    """Split on whitespace, but keep ``(...)`` and ``[...]`` groups whole."""
    toks: list[_Tok] = []
    i, n = 0, len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        start, depth = i, 0
        while i < n and (depth > 0 or not line[i].isspace()):
            c = line[i]
            if c in "([":
                depth += 1
            elif c in ")]" and depth > 0:
                depth -= 1
            i += 1
        toks.append(_Tok(line[start:i], start + 1))
    return toks


def _strip_comment(line: str) -> str:
    k = line.find("#")
    return line if k < 0 else line[:k]


# -- literals ---------------------------------------------------------------


def _real(text: str, tok: _Tok, what: str = "number") -> float:
    if not _REAL.match(text):
        raise _LineError(tok.col, len(tok.text), f"bad {what} {text!r}", "a decimal number")
    x = float(text)
    if not math.isfinite(x):
        raise _LineError(tok.col, len(tok.text), f"{what} out of range", "a finite number")
    return x


def _complex(text: str, tok: _Tok) -> complex:
    m = _COMPLEX.fullmatch(text)
    if m:
        re_, sign, im = m.groups()
        z = complex(float(re_), float(im) * (-1 if sign == "-" else 1))
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise _LineError(tok.col, len(tok.text), "complex literal out of range", "a finite number")
        return z
    return complex(_real(text, tok, "amplitude"), 0.0)


def _ident(tok: _Tok, what: str) -> str:
    if not _IDENT.match(tok.text):
        raise _LineError(tok.col, len(tok.text), f"bad {what} {tok.text!r}", "an identifier")
    return tok.text


def _identifiers(text: str, tok: _Tok, what: str) -> tuple[str, ...]:
    parts = text.split(",")
    if not all(_IDENT.match(p) for p in parts):
        raise _LineError(tok.col, len(tok.text), f"bad {what} list {text!r}", "comma-separated identifiers")
    return tuple(parts)


def _basis(text: str, tok: _Tok) -> BasisSpec:
    if "*" in text:
        factors = tuple(_basis(part, tok) for part in text.split("*"))
        if any(f.kind == "product" for f in factors):
            raise _LineError(tok.col, len(tok.text), "nested product basis")
        return BasisSpec("product", 0.0, factors)
    if text in ("computational", "bell"):
        return BasisSpec(text)
    m = _SPIN.match(text)
    if m:
        return BasisSpec("spin", _real(m.group(1), tok, "angle"))
    raise _LineError(tok.col, len(tok.text), f"unknown basis {text!r}", "computational, bell, spin(theta) or a*b")


def _matrix(text: str, tok: _Tok) -> GateSpec:
    if not (text.startswith("MATRIX[") and text.endswith("]")):
        raise _LineError(tok.col, len(tok.text), f"bad matrix literal {text!r}", "MATRIX[a,b;c,d]")
    body = text[len("MATRIX[") : -1]
    rows = []
    for row in body.split(";"):
        entries = _split_top(row.strip(), ",")
        rows.append(tuple(_complex(e.strip(), tok) for e in entries))
    if not rows or any(len(r) != len(rows) for r in rows):
        raise _LineError(tok.col, len(tok.text), "matrix literal must be square", "MATRIX[a,b;c,d]")
    return GateSpec("MATRIX", tuple(rows))


def _split_top(text: str, sep: str) -> list[str]:
    out, depth, cur = [], 0, []
    for c in text:
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        if c == sep and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(c)
    out.append("".join(cur))
    return out


def _gate(tok: _Tok) -> GateSpec:
    if tok.text.startswith("MATRIX"):
        return _matrix(tok.text, tok)
    if tok.text not in NAMED_UNITARIES:
        raise _LineError(tok.col, len(tok.text), f"unknown gate {tok.text!r}", ", ".join(NAMED_UNITARIES) + " or MATRIX[...]")
    return GateSpec(tok.text)


def _keyvals(toks: list[_Tok], allowed: tuple[str, ...]) -> dict[str, tuple[str, _Tok]]:
    out: dict[str, tuple[str, _Tok]] = {}
    for t in toks:
        key, eq, val = t.text.partition("=")
        if not eq or key not in allowed:
            raise _LineError(t.col, len(t.text), f"unexpected {t.text!r}", " ".join(f"{k}=..." for k in allowed))
        if key in out:
            raise _LineError(t.col, len(t.text), f"repeated {key}=")
        out[key] = (val, t)
    return out


def _need(kv: dict, key: str, line_toks: list[_Tok]) -> tuple[str, _Tok]:
    if key not in kv:
        last = line_toks[-1]
        raise _LineError(last.col + len(last.text), 1, f"missing {key}=", f"{key}=...")
    return kv[key]


# -- superpositions ---------------------------------------------------------


def _superposition(text: str, col0: int, dims: list[int]) -> list[complex]:
    """Parse ``a|k> + b|k'> ...`` into a dense amplitude vector."""
    total = math.prod(dims)
    amps = [0j] * total
    seen = set()
    i, n = 0, len(text)

    def err(at: int, msg: str, hint: str = "") -> _LineError:
        return _LineError(col0 + at, 1, msg, hint)

    def skip(i: int) -> int:
        while i < n and text[i].isspace():
            i += 1
        return i

    first = True
    while True:
        i = skip(i)
        if i >= n:
            if first:
                raise err(i, "empty state", "amp|k>")
            break
        sign = 1.0
        if not first:
            if text[i] not in "+-":
                raise err(i, f"unexpected {text[i]!r}", "+ or -")
            sign = -1.0 if text[i] == "-" else 1.0
            i = skip(i + 1)
        elif text[i] in "+-":
            sign = -1.0 if text[i] == "-" else 1.0
            i = skip(i + 1)
        start = i
        amp = complex(1.0)
        if i < n and text[i] == "(":
            j = text.find(")", i)
            if j < 0:
                raise err(i, "unclosed complex literal", ")")
            amp = _complex(text[i : j + 1], _Tok(text[i : j + 1], col0 + i))
            i = j + 1
        elif i < n and text[i] != "|":
            m = _LEADING_NUM.match(text, i)
            if not m:
                raise err(i, f"unexpected {text[i]!r}", "amplitude or |k>")
            amp = complex(_real(m.group(0), _Tok(m.group(0), col0 + i), "amplitude"))
            i = m.end()
        i = skip(i)
        if i >= n or text[i] != "|":
            raise err(i, "missing ket", "|k>")
        j = text.find(">", i)
        if j < 0:
            raise err(i, "unclosed ket", ">")
        label = text[i + 1 : j]
        digits = label.split(",") if "," in label else list(label)
        if len(digits) != len(dims) or not all(d.isdigit() for d in digits):
            raise err(i, f"bad ket |{label}> for {len(dims)} subsystem(s)", "one digit per subsystem")
        idx = 0
        for d, dim in zip(digits, dims):
            k = int(d)
            if k >= dim:
                raise err(i, f"ket |{label}> out of range for dim {dim}")
            idx = idx * dim + k
        if idx in seen:
            raise err(start, f"ket |{label}> repeated")
        seen.add(idx)
        amps[idx] = sign * amp
        i = j + 1
        first = False
    return amps


# -- statements -------------------------------------------------------------


@dataclass
class _Draft:
    name: str | None = None
    name_line: int = 0
    systems: list = None
    agents: list = None
    states: list = None
    events: list = None
    checks: list = None
    policies: list = None

    def __post_init__(self):
        for f in ("systems", "agents", "states", "events", "checks", "policies"):
            setattr(self, f, [])


def _parse_line(toks: list[_Tok], raw: str, draft: _Draft, lineno: int) -> None:
    kw = toks[0]
    args = toks[1:]
    if kw.text not in KEYWORDS:
        raise _LineError(kw.col, len(kw.text), f"unknown statement {kw.text!r}", ", ".join(KEYWORDS))

    def arity(k: int, hint: str) -> None:
        if len(args) < k:
            at = toks[-1].col + len(toks[-1].text)
            raise _LineError(at, 1, f"{kw.text} needs more arguments", hint)

    if kw.text == "SCENARIO":
        arity(1, "a scenario name")
        if len(args) > 1:
            raise _LineError(args[1].col, len(args[1].text), "unexpected text after scenario name")
        if draft.name is not None:
            raise _LineError(kw.col, len(kw.text), f"second SCENARIO header (first on line {draft.name_line})")
        draft.name = _ident(args[0], "scenario name")
        draft.name_line = lineno
    elif kw.text == "SYSTEM":
        arity(2, "SYSTEM label dim=N")
        label = _ident(args[0], "subsystem label")
        kv = _keyvals(args[1:], ("dim",))
        val, t = _need(kv, "dim", toks)
        if not val.isdigit():
            raise _LineError(t.col, len(t.text), f"bad dimension {val!r}", "an integer >= 2")
        draft.systems.append((label, int(val), lineno, args[0]))
    elif kw.text == "AGENT":
        arity(3, "AGENT name observes L1 L2 ...")
        name = _ident(args[0], "agent name")
        if args[1].text != "observes":
            raise _LineError(args[1].col, len(args[1].text), f"unexpected {args[1].text!r}", "observes")
        draft.agents.append((Agent(name, tuple(_ident(t, "subsystem label") for t in args[2:])), lineno))
    elif kw.text == "STATE":
        arity(2, "STATE L[,L...] amp|k> + ...")
        labels = _identifiers(args[0].text, args[0], "subsystem")
        rest_col = args[1].col
        draft.states.append((labels, raw[rest_col - 1 :], rest_col, lineno, args[0]))
    elif kw.text == "EVENT":
        arity(1, "an event kind")
        kind = args[0]
        if kind.text not in EVENT_KINDS:
            raise _LineError(kind.col, len(kind.text), f"unknown event kind {kind.text!r}", ", ".join(EVENT_KINDS))
        rest = args[1:]
        if kind.text == "noop":
            if rest:
                raise _LineError(rest[0].col, len(rest[0].text), "noop takes no arguments")
            draft.events.append((NoopEvent(), lineno))
        elif kind.text == "unitary":
            arity(3, "EVENT unitary GATE T1 [T2 ...]")
            gate = _gate(rest[0])
            targets = tuple(_ident(t, "target") for t in rest[1:])
            draft.events.append((UnitaryEvent(gate, targets), lineno))
        elif kind.text == "measure":
            arity(5, "EVENT measure AGENT basis=B targets=T1,T2 record=R")
            agent = _ident(rest[0], "agent name")
            kv = _keyvals(rest[1:], ("basis", "targets", "record"))
            bval, btok = _need(kv, "basis", toks)
            tval, ttok = _need(kv, "targets", toks)
            rval, rtok = _need(kv, "record", toks)
            if not _IDENT.match(rval):
                raise _LineError(rtok.col, len(rtok.text), f"bad record label {rval!r}", "an identifier")
            draft.events.append(
                (MeasureEvent(agent, _basis(bval, btok), _identifiers(tval, ttok, "target"), rval), lineno)
            )
        else:
            arity(5, "EVENT signal when R==OUTCOME apply GATE T1 [T2 ...]")
            if rest[0].text != "when":
                raise _LineError(rest[0].col, len(rest[0].text), f"unexpected {rest[0].text!r}", "when")
            cond = rest[1]
            rec, eq, outcome = cond.text.partition("==")
            if not eq or not _IDENT.match(rec) or not _LABEL.match(outcome):
                raise _LineError(cond.col, len(cond.text), f"bad condition {cond.text!r}", "RECORD==OUTCOME")
            if rest[2].text != "apply":
                raise _LineError(rest[2].col, len(rest[2].text), f"unexpected {rest[2].text!r}", "apply")
            gate = _gate(rest[3])
            targets = tuple(_ident(t, "target") for t in rest[4:])
            draft.events.append((SignalEvent(rec, outcome, gate, targets), lineno))
    elif kw.text == "CHECK":
        arity(2, "a check kind")
        kind = args[0]
        if kind.text not in CHECK_KINDS:
            raise _LineError(kind.col, len(kind.text), f"unknown check kind {kind.text!r}", ", ".join(CHECK_KINDS))
        rest = args[1:]
        if kind.text == "outcome":
            target, eq, val = rest[0].text.partition("==")
            if not eq or not _IDENT.match(target) or not val.isdigit():
                raise _LineError(rest[0].col, len(rest[0].text), f"bad outcome {rest[0].text!r}", "T==v")
            kv = _keyvals(rest[1:], ("agents", "tol"))
            fields = dict(targets=(target,), value=int(val))
        elif kind.text == "definite":
            obs = rest[0]
            if obs.text not in OBSERVABLES:
                raise _LineError(obs.col, len(obs.text), f"unknown observable {obs.text!r}", " or ".join(OBSERVABLES))
            kv = _keyvals(rest[1:], ("targets", "agents", "tol"))
            tval, ttok = _need(kv, "targets", toks)
            fields = dict(targets=_identifiers(tval, ttok, "target"), observable=obs.text)
        else:
            kv = _keyvals(rest, ("basis", "targets", "agents", "tol"))
            bval, btok = _need(kv, "basis", toks)
            tval, ttok = _need(kv, "targets", toks)
            fields = dict(targets=_identifiers(tval, ttok, "target"), basis=_basis(bval, btok))
        aval, atok = _need(kv, "agents", toks)
        tol = DEFAULT_TOL
        if "tol" in kv:
            tol = _real(kv["tol"][0], kv["tol"][1], "tolerance")
        check = Check(kind.text, agents=_identifiers(aval, atok, "agent"), tol=tol, **fields)
        draft.checks.append((check, lineno))
    elif kw.text == "POLICY":
        arity(1, "unitary_only or collapse_at:AGENT[,AGENT...]")
        from .policies import parse_policy

        text = " ".join(t.text for t in args)
        try:
            draft.policies.append((str(parse_policy(text)), lineno))
        except WignerLabError as exc:
            raise _LineError(args[0].col, len(text), str(exc), "unitary_only or collapse_at:AGENT[,AGENT...]")


_WHERE = re.compile(r"(event|check) (\d+):")


def parse_scenario_full(text: str) -> tuple[Scenario | None, list[ParseDiagnostic]]:
    """Parse ``text``; returns ``(scenario or None, diagnostics)``.

    A scenario is returned only when no diagnostic is an error.
    """
    diags: list[ParseDiagnostic] = []
    draft = _Draft()

    def error(line: int, col: int, length: int, msg: str, hint: str = "") -> None:
        diags.append(ParseDiagnostic(SourceSpan(line, max(col, 1), max(length, 1)), "error", msg, hint))

    def warn(line: int, col: int, length: int, msg: str) -> None:
        diags.append(ParseDiagnostic(SourceSpan(line, max(col, 1), max(length, 1)), "warning", msg))

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, 1):
        body = _strip_comment(raw)
        toks = _tokenize(body)
        if not toks:
            continue
        try:
            _parse_line(toks, body, draft, lineno)
        except _LineError as e:
            error(lineno, e.column, e.length, e.message, e.hint)
        except (WignerLabError, ValueError, OverflowError, IndexError) as e:
            error(lineno, toks[0].col, len(toks[0].text), str(e))

    if draft.name is None:
        error(1, 1, 1, "missing SCENARIO header", "SCENARIO name")
    if not draft.systems:
        error(max(len(lines), 1), 1, 1, "no SYSTEM declared", "SYSTEM label dim=N")
        return None, diags

    # second pass: resolve against the declared register
    register: Register | None = None
    good: list[tuple[str, int]] = []
    for label, dim, ln, t in draft.systems:
        try:
            make_register(good + [(label, dim)])
        except WignerLabError as exc:
            error(ln, t.col, len(t.text), str(exc))
            continue
        good.append((label, dim))
    if good:
        register = make_register(good)
    factors = []
    if register is not None:
        for labels, rest, col, line, tok in draft.states:
            unknown = [label for label in labels if label not in register]
            if unknown:
                error(line, tok.col, len(tok.text), f"unknown subsystem {unknown[0]!r}")
                continue
            if len(set(labels)) != len(labels):
                error(line, tok.col, len(tok.text), "repeated subsystem in STATE")
                continue
            dims = [register.dim(label) for label in labels]
            if math.prod(dims) > register.total_dim:
                error(line, tok.col, len(tok.text), "STATE too large")
                continue
            try:
                amps = _superposition(rest, col, dims)
            except _LineError as e:
                error(line, e.column, e.length, e.message, e.hint)
                continue
            n2 = sum(abs(a) ** 2 for a in amps)
            if n2 == 0.0:
                error(line, col, len(rest), "zero state vector")
                continue
            if abs(n2 - 1.0) > EPS_NORM:
                warn(line, col, len(rest), f"state renormalized (norm^2 was {n2:.6g})")
            factors.append(normalized_factor(labels, amps))

    if any(d.severity == "error" for d in diags):
        return None, diags

    s = Scenario(
        name=draft.name,
        register=register,
        agents=tuple(a for a, _ in draft.agents),
        initial=tuple(factors),
        events=tuple(e for e, _ in draft.events),
        checks=tuple(c for c, _ in draft.checks),
        policies=tuple(p for p, _ in draft.policies),
    )
    issues = validate_scenario(s)
    for issue in issues:
        line = draft.name_line or 1
        m = _WHERE.match(issue.message)
        if m:
            k = int(m.group(2)) - 1
            pool = draft.events if m.group(1) == "event" else draft.checks
            line = pool[k][1]
        elif issue.message.startswith("agent "):
            name = issue.message.split()[1].strip("':")
            line = next((ln for a, ln in draft.agents if a.name == name), line)
        error(line, 1, 1, str(issue))
    if issues:
        return None, diags
    return s, diags


def parse_scenario(text: str) -> Scenario | list[ParseDiagnostic]:
    s, diags = parse_scenario_full(text)
    return s if s is not None else diags


# -- serialization ----------------------------------------------------------


def format_complex(z: complex) -> str:
    z = complex(z)
    if z.imag == 0.0:
        return format_float(z.real)
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"({format_float(z.real)}{sign}{format_float(abs(z.imag))}i)"


def _ket(index: int, dims: list[int]) -> str:
    digits = []
    for d in reversed(dims):
        digits.append(index % d)
        index //= d
    digits.reverse()
    if all(d <= 10 for d in dims):
        return "|" + "".join(str(k) for k in digits) + ">"
    return "|" + ",".join(str(k) for k in digits) + ">"


def format_superposition(amps, dims: list[int]) -> str:
    parts = []
    for idx, a in enumerate(amps):
        a = complex(a)
        if a == 0:
            continue
        ket = _ket(idx, dims)
        if a.imag == 0.0 and a.real < 0:
            coef, sign = a.real * -1, "-"
        else:
            coef, sign = a, "+"
        text = ket if coef == 1 else format_complex(coef) + ket
        if not parts:
            parts.append(("-" if sign == "-" else "") + text)
        else:
            parts.append(f"{sign} {text}")
    return " ".join(parts)


def format_gate(g: GateSpec) -> str:
    if g.name != "MATRIX":
        return g.name
    return "MATRIX[" + ";".join(",".join(format_complex(z) for z in row) for row in g.matrix) + "]"


def serialize_scenario(s: Scenario) -> str:
    from .errors import InvalidScenario

    issues = validate_scenario(s)
    if issues:
        raise InvalidScenario(issues)
    reg = s.register
    out = [f"SCENARIO {s.name}"]
    out += [f"SYSTEM {label} dim={dim}" for label, dim in reg.subsystems]
    out += [f"AGENT {a.name} observes {' '.join(a.observes)}" for a in s.agents]
    for f in s.initial:
        dims = [reg.dim(label) for label in f.labels]
        out.append(f"STATE {','.join(f.labels)} {format_superposition(f.amps, dims)}")
    for e in s.events:
        if isinstance(e, UnitaryEvent):
            out.append(f"EVENT unitary {format_gate(e.gate)} {' '.join(e.targets)}")
        elif isinstance(e, MeasureEvent):
            out.append(f"EVENT measure {e.agent} basis={e.basis} targets={','.join(e.targets)} record={e.record}")
        elif isinstance(e, SignalEvent):
            out.append(f"EVENT signal when {e.record}=={e.outcome} apply {format_gate(e.gate)} {' '.join(e.targets)}")
        else:
            out.append("EVENT noop")
    for c in s.checks:
        agents = ",".join(c.agents)
        tol = format_float(c.tol)
        if c.kind == "outcome":
            out.append(f"CHECK outcome {c.targets[0]}=={c.value} agents={agents} tol={tol}")
        elif c.kind == "definite":
            out.append(f"CHECK definite {c.observable} targets={','.join(c.targets)} agents={agents} tol={tol}")
        else:
            out.append(f"CHECK {c.kind} basis={c.basis} targets={','.join(c.targets)} agents={agents} tol={tol}")
    out += [f"POLICY {p}" for p in s.policies]
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario | list[ParseDiagnostic]:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
