"""Static functions over global types: participants, initiators, crashes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Union

from .kernel import (
    Action,
    Choice,
    End,
    Endpoint,
    Err,
    GlobalType,
    Label,
    Message,
    New,
    Par,
    Participant,
    Rec,
    Var,
)


class MissingErrBranch(ValueError):
    """A crashed endpoint sits on an action without an error branch."""


@dataclass(frozen=True)
class PublicDecl:
    channel: str
    server: Endpoint


# --- transition labels ----------------------------------------------------------


@dataclass(frozen=True)
class Comm:
    sender: Participant
    receiver: Participant
    channel: str
    message: Message

    def __post_init__(self):
        if isinstance(self.message, Err):
            raise ValueError("communication labels never carry ERR")

    def __str__(self) -> str:
        return f"{self.sender} -> {self.receiver} : {self.channel} {self.message}"


@dataclass(frozen=True)
class Fail:
    subject: Participant
    channel: str

    def __str__(self) -> str:
        return f"{self.subject} !fail {self.channel}"


@dataclass(frozen=True)
class Crash:
    subject: Participant

    def __str__(self) -> str:
        return f"{self.subject} crash"


TransitionLabel = Union[Comm, Fail, Crash]


def label_key(a: TransitionLabel) -> tuple:
    kind = {Comm: 0, Fail: 1, Crash: 2}[type(a)]
    return (kind, str(a))


def subjects(a: TransitionLabel) -> frozenset[Participant]:
    match a:
        case Comm(p, q, _, _):
            return frozenset({p, q})
        case Fail(p, _) | Crash(p):
            return frozenset({p})
    raise TypeError(a)


# --- participant sets -----------------------------------------------------------


def live_set(endpoints: Iterable[Endpoint]) -> frozenset[Participant]:
    return frozenset(e.ident for e in endpoints if e.alive)


def spawn_set(receiver: Endpoint | Participant, message: Message) -> frozenset[Participant]:
    if isinstance(message, New):
        return frozenset({Participant(receiver.role, message.channel)})
    return frozenset()


@lru_cache(maxsize=200_000)
def participants(g: GlobalType) -> frozenset[Participant]:
    """Indexed roles appearing as live endpoints, minus not-yet-spawned threads.

    Error-branch continuations are included.
    """
    match g:
        case End() | Var():
            return frozenset()
        case Rec(_, body, _):
            return participants(body)
        case Par(left, right):
            return participants(left) | participants(right)
        case Choice(branches):
            out: frozenset[Participant] = frozenset()
            for b in branches:
                out |= participants(b)
            return out
        case Action(p, q, _, branches):
            live = live_set((p, q))
            out = frozenset()
            for m, k in branches:
                out |= live | (participants(k) - spawn_set(q, m))
            return out
    raise TypeError(g)


def initiator(g: GlobalType) -> Participant | None:
    match g:
        case Action(p, _, _, _):
            return p.ident
        case Choice(branches):
            inits = {initiator(b) for b in branches}
            if len(inits) == 1:
                return inits.pop()
    return None


def public_participants(decls: Iterable[PublicDecl]) -> frozenset[Participant]:
    return frozenset(d.server.ident for d in decls)


# --- crash ------------------------------------------------------------------------


@lru_cache(maxsize=200_000)
def crash(g: GlobalType, victim: Participant) -> GlobalType:
    """Crash ``victim`` everywhere in ``g``: keep only error branches of its actions."""
    match g:
        case End() | Var():
            return g
        case Rec(var, body, n):
            return Rec(var, crash(body, victim), n)
        case Choice(branches):
            return Choice(tuple(crash(b, victim) for b in branches))
        case Par(left, right):
            return Par(crash(left, victim), crash(right, victim))
        case Action(p, q, s, branches):
            hit_p, hit_q = p.ident == victim, q.ident == victim
            if not (hit_p or hit_q):
                return Action(p, q, s, tuple((m, crash(k, victim)) for m, k in branches))
            g_err = g.err_branch()
            if g_err is None:
                raise MissingErrBranch(f"{victim} crashes on an action over {s} with no ERR branch")
            return Action(
                p.crashed() if hit_p else p,
                q.crashed() if hit_q else q,
                s,
                ((Err(), crash(g_err, victim)),),
            )
    raise TypeError(g)


def is_label_action(a: Action) -> bool:
    return all(isinstance(m, Label) for m, _ in a.regular())
