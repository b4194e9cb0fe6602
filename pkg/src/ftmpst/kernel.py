"""Global-type terms, structural congruence and substitution.

Terms are immutable; every operation here is a pure function. The one-line
rendering produced by :func:`render` doubles as the canonical serialization
used to order parallel operands and to identify explored states.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Iterator, Union

TAU = "tau"

_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*(#[0-9]+)?$")


class _Cached:
    """Mixin caching the structural hash of a frozen dataclass."""

    def __hash__(self) -> int:
        try:
            return self.__dict__["_hash"]
        except KeyError:
            h = hash((type(self).__name__,) + tuple(getattr(self, f.name) for f in fields(self)))
            self.__dict__["_hash"] = h
            return h


@dataclass(frozen=True, order=True)
class Participant:
    """Identity of a thread: a role plus a thread index."""

    role: str
    index: str = "0"

    def __str__(self) -> str:
        return self.role if self.index == "0" else f"{self.role}.{self.index}"

    def at(self, index: str) -> Participant:
        """``role(p)[index]``."""
        return Participant(self.role, index)


@dataclass(frozen=True, order=True)
class Endpoint:
    """A participant as written on an action, with its aliveness flag."""

    role: str
    index: str = "0"
    alive: bool = True

    @property
    def ident(self) -> Participant:
        return Participant(self.role, self.index)

    def crashed(self) -> Endpoint:
        return replace(self, alive=False)

    def __str__(self) -> str:
        return str(self.ident) + ("" if self.alive else "~")


def endpoint(text: str) -> Endpoint:
    """Build an endpoint from ``role``, ``role.idx`` or ``role.idx~``."""
    alive = not text.endswith("~")
    text = text.rstrip("~")
    role, _, index = text.partition(".")
    return Endpoint(role, index or "0", alive)


def participant(text: str) -> Participant:
    return endpoint(text).ident


# --- messages ---------------------------------------------------------------


@dataclass(frozen=True)
class Label:
    label: str
    sort: str | None = None

    def __str__(self) -> str:
        return self.label if self.sort is None else f"{self.label}({self.sort})"


@dataclass(frozen=True)
class New:
    channel: str

    def __str__(self) -> str:
        return f"new {self.channel}"


@dataclass(frozen=True)
class Err:
    def __str__(self) -> str:
        return "ERR"


ERR = Err()

Message = Union[Label, New, Err]


# --- global types -------------------------------------------------------------


@dataclass(frozen=True, eq=True)
class End(_Cached):
    __hash__ = _Cached.__hash__


@dataclass(frozen=True, eq=True)
class Var(_Cached):
    name: str
    __hash__ = _Cached.__hash__


@dataclass(frozen=True, eq=True)
class Rec(_Cached):
    """``rec X . body``; ``unfolds`` counts how often this binder was unrolled."""

    var: str
    body: "GlobalType"
    unfolds: int = 0
    __hash__ = _Cached.__hash__


@dataclass(frozen=True, eq=True)
class Par(_Cached):
    left: "GlobalType"
    right: "GlobalType"
    __hash__ = _Cached.__hash__


@dataclass(frozen=True, eq=True)
class Choice(_Cached):
    branches: tuple["GlobalType", ...]
    __hash__ = _Cached.__hash__


Branch = tuple[Message, "GlobalType"]


@dataclass(frozen=True, eq=True)
class Action(_Cached):
    sender: Endpoint
    receiver: Endpoint
    channel: str
    branches: tuple[Branch, ...]
    __hash__ = _Cached.__hash__

    def err_branch(self) -> "GlobalType | None":
        for m, g in self.branches:
            if isinstance(m, Err):
                return g
        return None

    def regular(self) -> list[Branch]:
        return [(m, g) for m, g in self.branches if not isinstance(m, Err)]

    @property
    def sole_err(self) -> bool:
        return len(self.branches) == 1 and isinstance(self.branches[0][0], Err)


GlobalType = Union[End, Var, Rec, Par, Choice, Action]

END = End()


def action(sender: Endpoint | str, receiver: Endpoint | str, channel: str, *branches: Branch) -> Action:
    """Convenience constructor; Err branches are moved last."""
    if isinstance(sender, str):
        sender = endpoint(sender)
    if isinstance(receiver, str):
        receiver = endpoint(receiver)
    ordered = [b for b in branches if not isinstance(b[0], Err)]
    ordered += [b for b in branches if isinstance(b[0], Err)]
    return Action(sender, receiver, channel, tuple(ordered))


def is_identifier(name: str) -> bool:
    return bool(_IDENT.match(name))


# --- rendering ----------------------------------------------------------------


@lru_cache(maxsize=200_000)
def render(g: GlobalType) -> str:
    """One-line DSL text of ``g``; parseable back by the frontend."""
    match g:
        case End():
            return "end"
        case Var(name):
            return name
        case Rec(var, body, n):
            mark = f"^{n}" if n else ""
            return f"rec {var}{mark} . {render(body)}"
        case Par(left, right):
            ltxt = render(left)
            if isinstance(left, (Par, Rec)):
                ltxt = f"({ltxt})"
            return f"{ltxt} || {render(right)}"
        case Choice(branches):
            return "choice { " + " | ".join(render(b) for b in branches) + " }"
        case Action(p, q, s, branches):
            body = ", ".join(f"{m} . {render(k)}" for m, k in branches)
            return f"{p} -> {q} : {s} {{ {body} }}"
    raise TypeError(f"not a global type: {g!r}")


# --- traversal helpers --------------------------------------------------------


def children(g: GlobalType) -> Iterator[GlobalType]:
    match g:
        case Rec(_, body, _):
            yield body
        case Par(left, right):
            yield left
            yield right
        case Choice(branches):
            yield from branches
        case Action(_, _, _, branches):
            for _, k in branches:
                yield k


def subterms(g: GlobalType) -> Iterator[GlobalType]:
    yield g
    for c in children(g):
        yield from subterms(c)


def channel_names(g: GlobalType) -> set[str]:
    """Every channel name and thread index occurring anywhere in ``g``."""
    out: set[str] = set()
    for t in subterms(g):
        if isinstance(t, Action):
            out.add(t.channel)
            out.add(t.sender.index)
            out.add(t.receiver.index)
            for m, _ in t.branches:
                if isinstance(m, New):
                    out.add(m.channel)
    return out


@lru_cache(maxsize=100_000)
def free_channels(g: GlobalType) -> frozenset[str]:
    """Channels used by actions of ``g`` and not bound by an enclosing ``new``."""
    match g:
        case End() | Var():
            return frozenset()
        case Action(_, _, s, branches):
            out = set() if s == TAU else {s}
            for m, k in branches:
                inner = free_channels(k)
                if isinstance(m, New):
                    inner = inner - {m.channel}
                out |= inner
            return frozenset(out)
    out: set[str] = set()
    for c in children(g):
        out |= free_channels(c)
    return frozenset(out)


@lru_cache(maxsize=100_000)
def free_vars(g: GlobalType) -> frozenset[str]:
    match g:
        case Var(name):
            return frozenset({name})
        case Rec(var, body, _):
            return free_vars(body) - {var}
    out: frozenset[str] = frozenset()
    for c in children(g):
        out |= free_vars(c)
    return out


def rebuild(g: GlobalType, kids: list[GlobalType]) -> GlobalType:
    """Same node as ``g`` with its children replaced, in order."""
    match g:
        case Rec(var, _, n):
            return Rec(var, kids[0], n)
        case Par():
            return Par(kids[0], kids[1])
        case Choice():
            return Choice(tuple(kids))
        case Action(p, q, s, branches):
            return Action(p, q, s, tuple((m, k) for (m, _), k in zip(branches, kids)))
    return g


# --- congruence ---------------------------------------------------------------


@lru_cache(maxsize=200_000)
def normalize(g: GlobalType) -> GlobalType:
    """Canonical representative modulo ``G || end = G`` and commutativity of ``||``.

    Parallel composition stays binary; associativity is not assumed.
    """
    match g:
        case Par(left, right):
            a, b = normalize(left), normalize(right)
            if isinstance(a, End):
                return b
            if isinstance(b, End):
                return a
            if render(b) < render(a):
                a, b = b, a
            return Par(a, b)
        case End() | Var():
            return g
    return rebuild(g, [normalize(c) for c in children(g)])


def _rename_rec_vars(g: GlobalType, env: dict[str, str], depth: int) -> GlobalType:
    match g:
        case Var(name):
            return Var(env.get(name, name))
        case Rec(var, body, n):
            fresh = f"R_{depth}"
            return Rec(fresh, _rename_rec_vars(body, {**env, var: fresh}, depth + 1), n)
        case End():
            return g
    return rebuild(g, [_rename_rec_vars(c, env, depth) for c in children(g)])


@lru_cache(maxsize=100_000)
def canonical(g: GlobalType) -> GlobalType:
    """Normal form with bound recursion variables named by binding depth."""
    return normalize(_rename_rec_vars(g, {}, 0))


def canonical_key(g: GlobalType) -> str:
    return render(canonical(g))


def structurally_equal(g1: GlobalType, g2: GlobalType) -> bool:
    return canonical(g1) == canonical(g2)


# --- substitution and renaming --------------------------------------------------


def substitute(g: GlobalType, var: str, replacement: GlobalType) -> GlobalType:
    """Capture-avoiding ``g{replacement / var}``."""
    bad = free_vars(replacement)
    return _subst(g, var, replacement, bad)


def _subst(g: GlobalType, var: str, rep: GlobalType, bad: frozenset[str]) -> GlobalType:
    match g:
        case Var(name):
            return rep if name == var else g
        case End():
            return g
        case Rec(x, body, n):
            if x == var:
                return g
            if x in bad and var in free_vars(body):
                taken = bad | free_vars(body) | {var}
                k = 1
                while f"{x}{k}" in taken:
                    k += 1
                body = _subst(body, x, Var(f"{x}{k}"), frozenset())
                x = f"{x}{k}"
            return Rec(x, _subst(body, var, rep, bad), n)
    return rebuild(g, [_subst(c, var, rep, bad) for c in children(g)])


def base_name(name: str) -> str:
    return name.split("#", 1)[0]


class FreshNames:
    """Yields ``base#k`` names avoiding a given set of used names."""

    def __init__(self, used: set[str] | frozenset[str] = frozenset()):
        self.used = set(used)

    def __call__(self, base: str) -> str:
        base = base_name(base)
        k = 1
        while f"{base}#{k}" in self.used:
            k += 1
        name = f"{base}#{k}"
        self.used.add(name)
        return name


def alpha_rename_bound_channels(g: GlobalType, fresh: FreshNames) -> GlobalType:
    """Rename every ``new``-bound channel of ``g`` (and the matching thread index)."""
    return _alpha(g, {}, fresh)


def _ren_ep(e: Endpoint, env: dict[str, str]) -> Endpoint:
    return replace(e, index=env[e.index]) if e.index in env else e


def _alpha(g: GlobalType, env: dict[str, str], fresh: FreshNames) -> GlobalType:
    match g:
        case Action(p, q, s, branches):
            out = []
            for m, k in branches:
                if isinstance(m, New):
                    t = fresh(m.channel)
                    out.append((New(t), _alpha(k, {**env, m.channel: t}, fresh)))
                else:
                    out.append((m, _alpha(k, env, fresh)))
            return Action(_ren_ep(p, env), _ren_ep(q, env), env.get(s, s), tuple(out))
        case End() | Var():
            return g
    return rebuild(g, [_alpha(c, env, fresh) for c in children(g)])


def unfold(g: Rec, fresh: FreshNames) -> GlobalType:
    """One ``[rec]`` unrolling; the body copy gets fresh bound channels."""
    body = alpha_rename_bound_channels(g.body, fresh)
    return substitute(body, g.var, Rec(g.var, g.body, g.unfolds + 1))
