"""Multi-line DSL printer; output reparses to a structurally equal spec."""

from __future__ import annotations

from .kernel import Action, Choice, End, GlobalType, Par, Rec, Var, children, normalize, rebuild, render
from .parser import ProtocolSpec

WIDTH = 80
INDENT = "  "


def collect_garbage(g: GlobalType) -> GlobalType:
    """Display-only: drop doubly-crashed sole-ERR prefixes.

    Such a prefix never fires and blocks nobody, so its continuation behaves
    the same without it.
    """
    g = rebuild(g, [collect_garbage(c) for c in children(g)])
    if isinstance(g, Action) and g.sole_err and not g.sender.alive and not g.receiver.alive:
        return g.branches[0][1]
    return normalize(g)


def format_type(g: GlobalType, level: int = 0) -> str:
    one_line = render(g)
    if len(INDENT * level) + len(one_line) <= WIDTH:
        return one_line
    pad, inner = INDENT * level, INDENT * (level + 1)
    match g:
        case Action(p, q, s, branches):
            body = ",\n".join(f"{inner}{m} . {format_type(k, level + 1)}" for m, k in branches)
            return f"{p} -> {q} : {s} {{\n{body}\n{pad}}}"
        case Rec(var, body, n):
            mark = f"^{n}" if n else ""
            return f"rec {var}{mark} . {format_type(body, level)}"
        case Par(left, right):
            ltxt = format_type(left, level + 1)
            if isinstance(left, (Par, Rec)):
                ltxt = f"({ltxt}\n{pad})"
            return f"{ltxt}\n{pad}|| {format_type(right, level)}"
        case Choice(branches):
            parts = f"\n{pad}| ".join(format_type(b, level + 1) for b in branches)
            return f"choice {{\n{inner}{parts}\n{pad}}}"
        case End() | Var():
            return one_line
    raise TypeError(g)


def pretty_print(spec: ProtocolSpec, gc: bool = False) -> str:
    lines = [f"protocol {spec.name}"]
    lines += [f"public {d.channel} : {d.server}" for d in spec.publics]
    lines += [f"private {d.channel} : {d.first}, {d.second}" for d in spec.privates]
    body = collect_garbage(spec.body) if gc else spec.body
    return "\n".join(lines) + "\n\n" + format_type(body) + "\n"
