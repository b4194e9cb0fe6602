"""The coherence judgement ``Delta; Gamma |- G``.

The checker is syntax directed. Incoherence is a verdict, reported as a
list of :class:`Failure` records naming the rule that did not apply and the
path of the offending node; it never raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from .analysis import PublicDecl, initiator
from .kernel import (
    TAU,
    Action,
    Choice,
    End,
    Endpoint,
    Err,
    GlobalType,
    Label,
    New,
    Par,
    Participant,
    Rec,
    Var,
    free_channels,
    free_vars,
)

STRICT = "strict"
RELAXED_END = "relaxed-end"


@dataclass(frozen=True)
class PublicServer:
    server: Participant

    @property
    def members(self) -> frozenset[Participant]:
        return frozenset({self.server})

    def __str__(self) -> str:
        return str(self.server)


@dataclass(frozen=True)
class Session:
    ends: frozenset[Endpoint]

    @property
    def members(self) -> frozenset[Participant]:
        return frozenset(e.ident for e in self.ends)

    def __str__(self) -> str:
        return "{" + ", ".join(sorted(map(str, self.ends))) + "}"


Binding = Union[PublicServer, Session]
Gamma = Mapping[str, Binding]
Delta = Mapping[str, Gamma]


class DuplicateVariable(KeyError):
    pass


@dataclass(frozen=True)
class Failure:
    rule: str
    path: tuple
    message: str

    @property
    def path_text(self) -> str:
        return "/".join(map(str, self.path))


@dataclass
class CoherenceReport:
    mode: str
    failures: list[Failure] = field(default_factory=list)

    @property
    def coherent(self) -> bool:
        return not self.failures

    @property
    def verdict(self) -> str:
        return "Coherent" if self.coherent else "Incoherent"

    def __str__(self) -> str:
        return f"{self.verdict} ({self.mode})"


def session(*ends: Endpoint) -> Session:
    return Session(frozenset(ends))


def weaken_delta(delta: Delta, var: str, snapshot: Gamma) -> dict[str, Gamma]:
    if var in delta:
        raise DuplicateVariable(var)
    return {**delta, var: dict(snapshot)}


def header_gamma(publics: Iterable[PublicDecl], privates: Iterable[tuple[str, Endpoint, Endpoint]] = ()) -> dict[str, Binding]:
    gamma: dict[str, Binding] = {d.channel: PublicServer(d.server.ident) for d in publics}
    for s, p, q in privates:
        gamma[s] = session(p, q)
    return gamma


def runtime_gamma(g: GlobalType, publics: Iterable[PublicDecl]) -> dict[str, Binding]:
    """Channel environment of a reachable state.

    Public bindings come from the declarations; each free private channel is
    bound to the endpoints of its first non-failed action (or, failing that,
    its first action), flags included.
    """
    gamma: dict[str, Binding] = {d.channel: PublicServer(d.server.ident) for d in publics}
    found: dict[str, Action] = {}
    for s, a in _walk(g, frozenset()):
        if s in gamma:
            continue
        if s not in found or (found[s].sole_err and not a.sole_err):
            found[s] = a
    for s in sorted(found):
        a = found[s]
        gamma[s] = session(a.sender, a.receiver)
    return gamma


def _children_free_actions(g: GlobalType, bound: frozenset[str]):
    match g:
        case Rec(_, body, _):
            yield from _walk(body, bound)
        case Par(left, right):
            yield from _walk(left, bound)
            yield from _walk(right, bound)
        case Choice(branches):
            for b in branches:
                yield from _walk(b, bound)


def _walk(g: GlobalType, bound: frozenset[str]):
    if isinstance(g, Action):
        if g.channel != TAU and g.channel not in bound:
            yield g.channel, g
        for m, k in g.branches:
            inner = bound | {m.channel} if isinstance(m, New) else bound
            yield from _walk(k, inner)
    else:
        yield from _children_free_actions(g, bound)


class _Checker:
    def __init__(self, mode: str):
        self.mode = mode

    def check(self, g: GlobalType, delta: Delta, gamma: Gamma, path: tuple) -> list[Failure]:
        match g:
            case End():
                if self.mode == STRICT and gamma:
                    return [Failure("end", path, "open channels at end: " + ", ".join(sorted(gamma)))]
                return []
            case Var(x):
                if x not in delta:
                    return [Failure("var-rec", path, f"unbound recursion variable {x}")]
                if dict(delta[x]) != dict(gamma):
                    return [Failure("var-rec", path, f"environment at {x} differs from its binder: "
                                    + _diff(delta[x], gamma))]
                return []
            case Rec(x, body, _):
                return self.check(body, {**delta, x: dict(gamma)}, gamma, path + ("body",))
            case Choice(branches):
                out: list[Failure] = []
                for i, b in enumerate(branches):
                    out += self.check(b, delta, gamma, path + (i,))
                if initiator(g) is None:
                    out.insert(0, Failure("sum", path, "choice has no unique initiator"))
                return out
            case Par(left, right):
                return self.par(left, right, delta, gamma, path)
            case Action():
                return self.action(g, delta, gamma, path)
        raise TypeError(g)

    def par(self, left, right, delta, gamma, path) -> list[Failure]:
        fl, fr = free_channels(left), free_channels(right)
        privates = {s for s, b in gamma.items() if isinstance(b, Session)}
        shared = sorted((fl & fr) & privates)
        if shared:
            return [Failure("par", path, "private channel shared by both sides: " + ", ".join(shared))]
        vl, vr = free_vars(left), free_vars(right)
        if vl & vr:
            return [Failure("par", path, "recursion variable used on both sides: " + ", ".join(sorted(vl & vr)))]
        g1 = {s: b for s, b in gamma.items() if s not in privates or s not in fr}
        g2 = {s: b for s, b in gamma.items() if s not in privates or s in fr}
        d1 = {x: v for x, v in delta.items() if x not in vr}
        d2 = {x: v for x, v in delta.items() if x in vr}
        return self.check(left, d1, g1, path + ("L",)) + self.check(right, d2, g2, path + ("R",))

    def action(self, a: Action, delta, gamma, path) -> list[Failure]:
        p, q, s = a.sender, a.receiver, a.channel
        regs = a.regular()
        n_err = len(a.branches) - len(regs)
        if n_err > 1:
            return [Failure("malformed", path, "more than one ERR branch")]
        if n_err == 0:
            return [Failure("malformed", path, f"action on {s} has no ERR branch")]
        g_err = a.err_branch()
        err_path = path + (next(i for i, (m, _) in enumerate(a.branches) if isinstance(m, Err)),)
        if not regs:
            return self.fail(a, g_err, delta, gamma, err_path, path)
        if all(isinstance(m, Label) for m, _ in regs):
            return self.send(a, regs, g_err, delta, gamma, path, err_path)
        if len(regs) == 1 and isinstance(regs[0][0], New):
            t = regs[0][0].channel
            if s == TAU or p.ident == q.ident:
                return self.spawn(a, t, regs[0][1], g_err, delta, gamma, path, err_path)
            return self.req(a, t, regs[0][1], g_err, delta, gamma, path, err_path)
        return [Failure("malformed", path, "action mixes messages and channel creation")]

    def send(self, a, regs, g_err, delta, gamma, path, err_path) -> list[Failure]:
        p, q, s = a.sender, a.receiver, a.channel
        binding = gamma.get(s)
        if not isinstance(binding, Session) or binding.members != {p.ident, q.ident}:
            return [Failure("send", path, f"channel {s} is not open between {p.ident} and {q.ident}")]
        if not (p.alive and q.alive):
            return [Failure("send", path, "crashed endpoint on an action with live branches")]
        labels = [m.label for m, _ in regs]
        dups = sorted({x for x in labels if labels.count(x) > 1})
        if dups:
            return [Failure("send", path, "duplicate label " + ", ".join(dups))]
        out: list[Failure] = []
        for i, (m, k) in enumerate(a.branches):
            if not isinstance(m, Err):
                out += self.check(k, delta, gamma, path + (i,))
        closed = {c: b for c, b in gamma.items() if c != s}
        return out + self.check(g_err, delta, closed, err_path)

    def req(self, a, t, g_new, g_err, delta, gamma, path, err_path) -> list[Failure]:
        p, q, s = a.sender, a.receiver, a.channel
        binding = gamma.get(s)
        if not isinstance(binding, PublicServer) or binding.server != q.ident:
            return [Failure("req", path, f"{s} is not a public channel of {q.ident}")]
        if t in gamma:
            return [Failure("req", path, f"channel {t} is already in use")]
        opened = {**gamma, t: session(p, Endpoint(q.role, t))}
        return self.check(g_new, delta, opened, path + (_new_index(a),)) + self.check(g_err, delta, gamma, err_path)

    def spawn(self, a, t, g_new, g_err, delta, gamma, path, err_path) -> list[Failure]:
        p, q, s = a.sender, a.receiver, a.channel
        if s != TAU or p.ident != q.ident:
            return [Failure("spawn", path, "local spawn needs sender = receiver over tau")]
        if t in gamma:
            return [Failure("spawn", path, f"channel {t} is already in use")]
        opened = {**gamma, t: session(p, Endpoint(p.role, t))}
        return self.check(g_new, delta, opened, path + (_new_index(a),)) + self.check(g_err, delta, gamma, err_path)

    def fail(self, a, g_err, delta, gamma, err_path, path) -> list[Failure]:
        # Either the channel stays as it is, or this action closes it.
        p, q, s = a.sender, a.receiver, a.channel
        binding = gamma.get(s)
        attempts: list[list[Failure]] = []
        if p.ident == q.ident or (binding is not None and q.ident in binding.members):
            attempts.append(self.check(g_err, delta, gamma, err_path))
            if not attempts[-1]:
                return []
        if p.ident != q.ident and isinstance(binding, Session) and binding.members == {p.ident, q.ident}:
            closed = {c: b for c, b in gamma.items() if c != s}
            attempts.append(self.check(g_err, delta, closed, err_path))
            if not attempts[-1]:
                return []
        if not attempts:
            return [Failure("fail", path, f"{q.ident} is not an endpoint of {s}")]
        return attempts[0]


def _new_index(a: Action) -> int:
    return next(i for i, (m, _) in enumerate(a.branches) if isinstance(m, New))


def _diff(want: Gamma, got: Gamma) -> str:
    parts = []
    for c in sorted(set(want) | set(got)):
        if want.get(c) != got.get(c):
            parts.append(f"{c}: expected {want.get(c, '-')}, found {got.get(c, '-')}")
    return "; ".join(parts)


def check_coherence(g: GlobalType, delta: Delta | None = None, gamma: Gamma | None = None,
                    mode: str = RELAXED_END) -> CoherenceReport:
    if mode not in (STRICT, RELAXED_END):
        raise ValueError(f"unknown mode {mode!r}")
    failures = _Checker(mode).check(g, delta or {}, gamma or {}, ())
    return CoherenceReport(mode, failures)


def is_coherent(g: GlobalType, gamma: Gamma, mode: str = RELAXED_END) -> bool:
    return check_coherence(g, {}, gamma, mode).coherent
