"""JSON and DOT serializations with stable field order."""

from __future__ import annotations

import json

from .analysis import Comm, Crash, Fail, TransitionLabel
from .coherence import CoherenceReport
from .explorer import Edge, PropertyVerdict, StateGraph
from .kernel import Err, render
from .parser import ProtocolSpec
from .semantics import Transition


def label_json(a: TransitionLabel) -> dict:
    match a:
        case Comm(p, q, s, m):
            return {"kind": "comm", "subjects": [str(p), str(q)], "channel": s, "message": str(m)}
        case Fail(p, s):
            return {"kind": "fail", "subjects": [str(p)], "channel": s, "message": str(Err())}
        case Crash(p):
            return {"kind": "crash", "subjects": [str(p)], "channel": None, "message": None}
    raise TypeError(a)


def report_json(report: CoherenceReport, spec: ProtocolSpec) -> dict:
    failures = []
    for f in report.failures:
        span = spec.spans.get(f.path)
        failures.append({
            "rule": f.rule,
            "path": f.path_text,
            "message": f.message,
            "span": None if span is None else {"line": span.line, "column": span.column, "length": span.length},
        })
    return {"protocol": spec.name, "mode": report.mode, "verdict": report.verdict, "failures": failures}


def edge_json(e: Edge) -> dict:
    return {"src": e.src, "label": label_json(e.label), "rule": e.rule, "dst": e.dst}


def verdict_json(v: PropertyVerdict) -> dict:
    return {
        "name": v.property,
        "applicable": v.applicable,
        "checked": v.checked_states,
        "violations": [{"state": x.state, "label": x.label, "diagnosis": x.diagnosis} for x in v.violations],
    }


def graph_json(graph: StateGraph, verdicts: list[PropertyVerdict] = ()) -> dict:
    b = graph.budgets
    return {
        "budgets": {"maxStates": b.max_states, "maxDepth": b.max_depth, "maxUnfold": b.max_unfold},
        "truncated": graph.truncated,
        "states": [{"id": i, "term": render(g)} for i, g in enumerate(graph.states)],
        "edges": [edge_json(e) for e in graph.edges],
        "properties": [verdict_json(v) for v in verdicts],
    }


def trace_json(seed: int, trace: list[Transition]) -> dict:
    steps = []
    for i, t in enumerate(trace):
        steps.append({"src": i, "label": label_json(t.label), "rule": t.rule, "dst": i + 1,
                      "term": render(t.successor)})
    return {"seed": seed, "steps": steps}


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=True) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def graph_dot(graph: StateGraph) -> str:
    lines = ["digraph states {", "  node [shape=circle];"]
    for i, g in enumerate(graph.states):
        extra = ", peripheries=2" if i == graph.initial else ""
        lines.append(f'  s{i} [label="{i}", tooltip="{_dot_escape(render(g))}"{extra}];')
    for e in graph.edges:
        style = ", style=dashed" if isinstance(e.label, Crash) else ""
        lines.append(f'  s{e.src} -> s{e.dst} [label="{_dot_escape(f"{e.rule}: {e.label}")}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
