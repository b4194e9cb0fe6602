"""Command-line interface: ``ftmpst check|steps|apply|crash|explore|trace``."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .analysis import MissingErrBranch, crash
from .coherence import RELAXED_END, STRICT, Session, check_coherence, header_gamma, runtime_gamma
from .explorer import PROPERTIES, Budgets, check_properties, explore, sample_trace
from .export import dumps, graph_dot, graph_json, report_json, trace_json
from .kernel import GlobalType, participant
from .parser import ParseError, PrivateDecl, ProtocolSpec, WellFormednessError, parse
from .printer import pretty_print
from .semantics import Semantics

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _load(path: str) -> ProtocolSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise _UsageError(f"{path}: {e.strerror}") from e
    try:
        return parse(text)
    except (ParseError, WellFormednessError) as e:
        raise _UsageError(f"{path}:{e}") from e


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _respec(spec: ProtocolSpec, body: GlobalType) -> ProtocolSpec:
    """Header for a runtime state: declared publics plus the sessions it still uses."""
    privates = []
    for s, b in runtime_gamma(body, spec.publics).items():
        if isinstance(b, Session):
            ends = sorted(b.ends, key=str)
            privates.append(PrivateDecl(s, ends[0], ends[-1]))
    return ProtocolSpec(spec.name, spec.publics, tuple(privates), body)


def _cmd_check(args) -> int:
    spec = _load(args.file)
    mode = STRICT if args.strict_end else RELAXED_END
    report = check_coherence(spec.body, {}, header_gamma(spec.publics, spec.private_triples()), mode)
    print(report)
    for f in report.failures:
        span = spec.spans.get(f.path)
        where = f" at {span}" if span else ""
        print(f"  [{f.rule}]{where} ({f.path_text or 'root'}): {f.message}")
    if args.json:
        _write(args.json, dumps(report_json(report, spec)))
    return EXIT_OK if report.coherent else EXIT_FAIL


def _cmd_steps(args) -> int:
    spec = _load(args.file)
    for i, t in enumerate(Semantics(args.max_unfold).enabled(spec.body)):
        print(f"[{i}] {t.rule}: {t.label}")
    return EXIT_OK


def _cmd_apply(args) -> int:
    spec = _load(args.file)
    steps = Semantics(args.max_unfold).enabled(spec.body)
    if not 0 <= args.step < len(steps):
        raise _UsageError(f"step {args.step} out of range (0..{len(steps) - 1})")
    print(pretty_print(_respec(spec, steps[args.step].successor), gc=args.gc), end="")
    return EXIT_OK


def _cmd_crash(args) -> int:
    spec = _load(args.file)
    try:
        body = crash(spec.body, participant(args.who))
    except MissingErrBranch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    print(pretty_print(_respec(spec, body), gc=args.gc), end="")
    return EXIT_OK


def _props(text: str) -> list[str]:
    if text == "all":
        return list(PROPERTIES)
    if text == "none":
        return []
    names = [p.strip() for p in text.split(",") if p.strip()]
    unknown = [p for p in names if p not in PROPERTIES]
    if unknown:
        raise _UsageError("unknown property: " + ", ".join(unknown))
    return names


def _cmd_explore(args) -> int:
    spec = _load(args.file)
    props = _props(args.props)
    crash_only = None if args.crash_only is None else [participant(p) for p in args.crash_only.split(",") if p]
    budgets = Budgets(args.max_states, args.max_depth, args.max_unfold)
    graph = explore(spec.body, budgets, spec.publics, crash_only)
    verdicts = check_properties(graph, props, STRICT if args.strict_end else RELAXED_END)
    print(f"states: {len(graph.states)}  edges: {len(graph.edges)}  truncated: {str(graph.truncated).lower()}")
    print(f"budgets: maxStates={budgets.max_states} maxDepth={budgets.max_depth} maxUnfold={budgets.max_unfold}")
    for v in verdicts:
        print(v)
        for x in v.violations[:10]:
            print(f"  state {x.state} {x.label}: {x.diagnosis}")
    if args.json:
        _write(args.json, dumps(graph_json(graph, verdicts)))
    if args.dot:
        _write(args.dot, graph_dot(graph))
    ok = all(v.applicable and v.holds for v in verdicts)
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_trace(args) -> int:
    spec = _load(args.file)
    trace = sample_trace(spec.body, args.seed, args.steps, args.max_unfold)
    for i, t in enumerate(trace):
        print(f"[{i}] {t.rule}: {t.label}")
    if args.json:
        _write(args.json, dumps(trace_json(args.seed, trace)))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ftmpst", description="Fault-tolerant multiparty session global types.")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file")
        p.set_defaults(func=func)
        return p

    p = command("check", _cmd_check, "coherence report")
    p.add_argument("--strict-end", action="store_true", help="require all channels closed at end")
    p.add_argument("--json", metavar="PATH")

    for name, func, help_text in (("steps", _cmd_steps, "list enabled transitions"),
                                  ("apply", _cmd_apply, "print the successor of a transition")):
        p = command(name, func, help_text)
        p.add_argument("--max-unfold", type=int, default=Budgets.max_unfold)
        if name == "apply":
            p.add_argument("--step", type=int, required=True)
            p.add_argument("--gc", action="store_true", help="elide dead crashed prefixes")

    p = command("crash", _cmd_crash, "crash a participant")
    p.add_argument("--who", required=True, metavar="ROLE.IDX")
    p.add_argument("--gc", action="store_true", help="elide dead crashed prefixes")

    p = command("explore", _cmd_explore, "explore the state space and check properties")
    p.add_argument("--max-states", type=int, default=Budgets.max_states)
    p.add_argument("--max-depth", type=int, default=Budgets.max_depth)
    p.add_argument("--max-unfold", type=int, default=Budgets.max_unfold)
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--dot", metavar="PATH")
    p.add_argument("--props", default="all", help="all, none, or a comma-separated list")
    p.add_argument("--crash-only", metavar="LIST", help="only inject crashes of these participants")
    p.add_argument("--strict-end", action="store_true")

    p = command("trace", _cmd_trace, "sample a seeded random trace")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--max-unfold", type=int, default=Budgets.max_unfold)
    p.add_argument("--json", metavar="PATH")
    return ap


def run_cli(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())
