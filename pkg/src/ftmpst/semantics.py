"""Labelled transition semantics of runtime global types.

``Semantics.enabled`` enumerates every derivable transition of a term.
Recursion is the only source of unbounded derivations; each ``rec`` node
carries the number of times it has already been unrolled and is not unrolled
past ``max_unfold``.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .analysis import (
    Comm,
    Crash,
    Fail,
    MissingErrBranch,
    TransitionLabel,
    crash,
    initiator,
    is_label_action,
    label_key,
    live_set,
    participants,
    spawn_set,
    subjects,
)
from .kernel import (
    Action,
    Choice,
    Err,
    FreshNames,
    GlobalType,
    Label,
    Par,
    Participant,
    Rec,
    canonical_key,
    channel_names,
    normalize,
    render,
    unfold,
)

RULES = ("com", "com-snd-fail", "com-rcv-fail", "concur", "crash", "par", "rec", "choice", "choice-br")

DEFAULT_MAX_UNFOLD = 2


class NotEnabled(LookupError):
    pass


class AmbiguousTransition(LookupError):
    """Several transitions share the label but lead to different states."""

    def __init__(self, label, candidates):
        super().__init__(f"{label} has {len(candidates)} distinct successors")
        self.candidates = candidates


@dataclass(frozen=True)
class Transition:
    label: TransitionLabel
    successor: GlobalType
    rule: str
    path: tuple = ()

    def sort_key(self):
        return label_key(self.label) + (render(self.successor), self.rule, tuple(map(str, self.path)))


# (label, successor, outermost rule, redex path)
_Step = tuple[TransitionLabel, GlobalType, str, tuple]


class Semantics:
    def __init__(self, max_unfold: int = DEFAULT_MAX_UNFOLD, crash_only: Iterable[Participant] | None = None,
                 fire_err: bool = False):
        self.max_unfold = max_unfold
        self.crash_only = None if crash_only is None else frozenset(crash_only)
        # test-only mutation: let [com] fire error branches
        self.fire_err = fire_err
        self.truncated = False
        self._memo: dict = {}

    def enabled(self, g: GlobalType) -> list[Transition]:
        """All transitions of ``g``, deduplicated on (label, successor), in canonical order.

        Redex paths refer to ``normalize(g)``.
        """
        g = normalize(g)
        self._memo = {}
        seen: dict = {}
        for label, succ, rule, path in self._steps(g, frozenset(channel_names(g))):
            succ = normalize(succ)
            key = (label, canonical_key(succ))
            if key not in seen:
                seen[key] = Transition(label, succ, rule, path)
        self._memo = {}
        return sorted(seen.values(), key=Transition.sort_key)

    # -- derivations ---------------------------------------------------------

    def _steps(self, g: GlobalType, used: frozenset[str]) -> list[_Step]:
        key = (g, used)
        if key in self._memo:
            return self._memo[key]
        out: list[_Step] = []
        for r in sorted(participants(g)):
            if self.crash_only is not None and r not in self.crash_only:
                continue
            try:
                out.append((Crash(r), crash(g, r), "crash", ()))
            except MissingErrBranch:
                pass
        match g:
            case Action():
                out += self._action(g, used)
            case Par(left, right):
                out += [(a, Par(s, right), "par", ("L",) + p) for a, s, _, p in self._steps(left, used)]
                out += [(a, Par(left, s), "par", ("R",) + p) for a, s, _, p in self._steps(right, used)]
            case Rec():
                if g.unfolds >= self.max_unfold:
                    self.truncated = True
                else:
                    fresh = FreshNames(used)
                    body = unfold(g, fresh)
                    out += [(a, s, "rec", ("body",) + p) for a, s, _, p in self._steps(body, frozenset(fresh.used))]
            case Choice(branches):
                out += self._choice(g, branches, used)
        self._memo[key] = out
        return out

    def _action(self, g: Action, used) -> list[_Step]:
        p, q, s = g.sender, g.receiver, g.channel
        out: list[_Step] = []
        g_err = g.err_branch()
        for j, (m, k) in enumerate(g.branches):
            if isinstance(m, Err):
                if self.fire_err:
                    out.append((Comm(p.ident, q.ident, s, Label("ERR")), k, "com", (j,)))
                continue
            if p.alive and q.alive:
                out.append((Comm(p.ident, q.ident, s, m), k, "com", (j,)))
        distinct = p.ident != q.ident
        if g_err is not None and distinct:
            only_err = ((Err(), g_err),)
            if p.alive:
                out.append((Fail(p.ident, s), Action(p.crashed(), q, s, only_err), "com-snd-fail", ()))
            if q.alive and is_label_action(g):
                out.append((Fail(q.ident, s), Action(p, q.crashed(), s, only_err), "com-rcv-fail", ()))
        out += self._concur(g, used)
        return out

    def _concur(self, g: Action, used) -> list[_Step]:
        blocked = live_set((g.sender, g.receiver))
        per_branch: list[dict] = []
        for m, k in g.branches:
            stop = blocked | spawn_set(g.receiver, m)
            by_label: dict = {}
            for a, s, _, path in self._steps(k, used):
                if subjects(a) & stop:
                    continue
                by_label.setdefault(a, {}).setdefault(canonical_key(normalize(s)), (s, path))
            per_branch.append(by_label)
        common = set(per_branch[0])
        for d in per_branch[1:]:
            common &= set(d)
        out: list[_Step] = []
        for a in sorted(common, key=label_key):
            options = [list(d[a].values()) for d in per_branch]
            for combo in itertools.product(*options):
                branches = tuple((m, s) for (m, _), (s, _) in zip(g.branches, combo))
                out.append((a, Action(g.sender, g.receiver, g.channel, branches), "concur",
                            (tuple(path for _, path in combo),)))
        return out

    def _choice(self, g: Choice, branches, used) -> list[_Step]:
        init = initiator(g)
        out: list[_Step] = []
        per_branch: list[dict] = []
        for j, b in enumerate(branches):
            by_label: dict = {}
            for a, s, _, path in self._steps(b, used):
                if init is not None and init in subjects(a):
                    out.append((a, s, "choice", (j,) + path))
                by_label.setdefault(a, {}).setdefault(canonical_key(normalize(s)), (s, path))
            per_branch.append(by_label)
        common = set(per_branch[0])
        for d in per_branch[1:]:
            common &= set(d)
        for a in sorted(common, key=label_key):
            options = [list(d[a].values()) for d in per_branch]
            for combo in itertools.product(*options):
                out.append((a, Choice(tuple(s for s, _ in combo)), "choice-br",
                            (tuple(path for _, path in combo),)))
        return out


def enabled_transitions(g: GlobalType, max_unfold: int = DEFAULT_MAX_UNFOLD) -> list[Transition]:
    return Semantics(max_unfold).enabled(g)


def apply_transition(g: GlobalType, label: TransitionLabel, max_unfold: int = DEFAULT_MAX_UNFOLD,
                     path: tuple | None = None) -> GlobalType:
    """Successor of ``g`` under ``label``.

    When several successors exist, ``path`` selects one by the position of
    the fired redex; otherwise :class:`AmbiguousTransition` is raised.
    """
    matches = [t for t in enabled_transitions(g, max_unfold) if t.label == label]
    if path is not None:
        matches = [t for t in matches if t.path == tuple(path)]
    if not matches:
        raise NotEnabled(str(label))
    if len(matches) > 1:
        raise AmbiguousTransition(label, matches)
    return matches[0].successor


def two_step_timeout_witness(g: GlobalType, max_unfold: int = DEFAULT_MAX_UNFOLD,
                             max_states: int = 2000) -> list[Transition] | None:
    """Find ``Fail(x, s)``, ``Fail(y, s)``, then an action of ``y`` that only the second failure unblocked.

    Breadth-first over reachable states; ``None`` when no witness exists within budget.
    """
    sem = Semantics(max_unfold)
    start = normalize(g)
    seen = {canonical_key(start)}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        steps = sem.enabled(state)
        for first in steps:
            if not isinstance(first.label, Fail):
                continue
            mid = sem.enabled(first.successor)
            mid_labels = {t.label for t in mid}
            for second in mid:
                lab = second.label
                if not (isinstance(lab, Fail) and lab.channel == first.label.channel
                        and lab.subject != first.label.subject):
                    continue
                for third in sem.enabled(second.successor):
                    if (isinstance(third.label, Comm) and lab.subject in subjects(third.label)
                            and third.label not in mid_labels):
                        return [first, second, third]
        for t in steps:
            key = canonical_key(t.successor)
            if key not in seen and len(seen) < max_states:
                seen.add(key)
                queue.append(t.successor)
    return None
