"""Command-line front end.

Exit codes: 0 all checks consistent (or the command succeeded), 2 at least one
CONTRADICTION or DEFINABILITY_MISMATCH, 1 usage, file or parse errors.
Reports go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .consistency import check_scenario, monte_carlo_check, render_text, report_to_json
from .dsl import parse_scenario_full, serialize_scenario
from .errors import WignerLabError
from .policies import parse_policies
from .scenarios import BUILTINS, MeasureEvent, Scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INCONSISTENT = 2

SEED_ENV = "WIGNERLAB_SEED"
U64 = 1 << 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for contradictions here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    source: str
    policies: tuple[str, ...] = ()
    seed: int = 0
    runs: int = 0
    tol: float | None = None
    fmt: str = "text"
    theta: float | None = None
    n_env: int | None = None

    def __post_init__(self):
        if self.runs < 0:
            raise UsageError("--runs must be >= 0")
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be > 0")
        if not 0 <= self.seed < U64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if self.fmt not in ("text", "json"):
            raise UsageError("--format must be text or json")


def resolve_seed(value: str | None) -> int:
    raw = value if value is not None else os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        seed = int(raw, 0)
    except ValueError:
        raise UsageError(f"bad seed {raw!r}") from None
    if not 0 <= seed < U64:
        raise UsageError(f"seed {seed} is not an unsigned 64-bit integer")
    return seed


def load_source(cfg: RunConfig) -> tuple[Scenario, tuple[str, ...]]:
    """Scenario plus its default policies."""
    if cfg.source in BUILTINS:
        b = BUILTINS[cfg.source]
        params = {}
        if cfg.theta is not None:
            if b.name != "epr_bell":
                raise UsageError("--theta applies only to epr_bell")
            params["theta"] = cfg.theta
        if cfg.n_env is not None:
            if b.name != "decoherence_demo":
                raise UsageError("--n-env applies only to decoherence_demo")
            params["n_env"] = cfg.n_env
        return b.build(**params), b.default_policies
    if cfg.theta is not None or cfg.n_env is not None:
        raise UsageError("--theta and --n-env apply only to built-in scenarios")
    path = Path(cfg.source)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"{cfg.source}: cannot read: {getattr(exc, 'strerror', None) or exc}") from None
    s, diags = parse_scenario_full(text)
    for d in diags:
        print(d.format(cfg.source), file=sys.stderr)
    if s is None:
        raise UsageError(None)
    if s.policies:
        return s, s.policies
    measuring = dict.fromkeys(e.agent for e in s.events if isinstance(e, MeasureEvent))
    return s, ("unitary_only",) + tuple(f"collapse_at:{a}" for a in measuring)


def _emit(report, fmt: str) -> None:
    sys.stdout.write(report_to_json(report) if fmt == "json" else render_text(report))


def cmd_check(cfg: RunConfig) -> int:
    s, defaults = load_source(cfg)
    policies = cfg.policies or defaults
    report = check_scenario(s, policies, tol=cfg.tol, seed=cfg.seed)
    _emit(report, cfg.fmt)
    return EXIT_OK if report.consistent else EXIT_INCONSISTENT


def cmd_run(cfg: RunConfig) -> int:
    if cfg.runs < 1:
        raise UsageError("run needs --runs >= 1")
    s, defaults = load_source(cfg)
    policies = cfg.policies or defaults[:1]
    if len(policies) != 1:
        raise UsageError("run takes exactly one policy")
    report = check_scenario(s, policies, tol=cfg.tol, seed=cfg.seed)
    report = replace(report, monte_carlo=monte_carlo_check(s, policies[0], cfg.runs, cfg.seed))
    _emit(report, cfg.fmt)
    return EXIT_OK


def cmd_parse(path: str) -> int:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"{path}: cannot read: {getattr(exc, 'strerror', None) or exc}") from None
    s, diags = parse_scenario_full(text)
    for d in diags:
        print(d.format(path), file=sys.stderr)
    if s is None:
        return EXIT_USAGE
    sys.stdout.write(serialize_scenario(s))
    return EXIT_OK


def cmd_list() -> int:
    width = max(len(n) for n in BUILTINS)
    for name, b in BUILTINS.items():
        print(f"{name:<{width}}  {b.summary}")
    return EXIT_OK


def _policy_list(values: list[str] | None) -> tuple[str, ...]:
    if not values:
        return ()
    out = []
    for v in values:
        out.extend(str(p) for p in parse_policies(v))
    return tuple(dict.fromkeys(out))


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = _Parser(prog="wignerlab", description="Nested-observer measurement scenarios and consistency checks.")
    parser.add_argument("--version", action="version", version=f"wignerlab {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("source", help="built-in scenario name or .scn file")
        p.add_argument("--seed", help=f"64-bit unsigned seed (default ${SEED_ENV}, else 0)")
        p.add_argument("--tol", type=float, help="override every check's tolerance")
        p.add_argument("--theta", type=float, help="Bob's angle in radians (epr_bell)")
        p.add_argument("--n-env", type=int, dest="n_env", help="environment qubits (decoherence_demo)")
        p.add_argument("--format", choices=("text", "json"), default="text", dest="fmt")

    p = sub.add_parser("check", help="compare predictions across policies")
    common(p)
    p.add_argument("-p", "--policies", action="append", help="comma list, e.g. unitary_only,collapse_at:F")

    p = sub.add_parser("run", help="seeded Monte Carlo runs under one policy")
    common(p)
    p.add_argument("-p", "--policy", "--policies", action="append", dest="policies", help="policy to sample")
    p.add_argument("--runs", type=int, default=1000)

    p = sub.add_parser("parse", help="validate a .scn file and print its canonical form")
    p.add_argument("path")

    sub.add_parser("list", help="list built-in scenarios")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "parse":
            return cmd_parse(args.path)
        if args.command == "list":
            return cmd_list()
        if args.command not in ("check", "run"):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        cfg = RunConfig(
            source=args.source,
            policies=_policy_list(args.policies),
            seed=resolve_seed(args.seed),
            runs=getattr(args, "runs", 0),
            tol=args.tol,
            fmt=args.fmt,
            theta=args.theta,
            n_env=args.n_env,
        )
        return cmd_check(cfg) if args.command == "check" else cmd_run(cfg)
    except UsageError as exc:
        if exc.args and exc.args[0]:
            print(f"wignerlab: error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (WignerLabError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"wignerlab: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
