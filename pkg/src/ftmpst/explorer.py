"""Bounded state-space exploration, meta-theorem checks, generation and traces."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .analysis import Crash, PublicDecl, TransitionLabel, crash, participants, subjects
from .coherence import RELAXED_END, check_coherence, header_gamma, runtime_gamma, weaken_delta
from .kernel import (
    TAU,
    Action,
    Choice,
    END,
    Endpoint,
    ERR,
    GlobalType,
    Label,
    New,
    Par,
    Participant,
    Rec,
    Var,
    canonical_key,
    free_vars,
    normalize,
    subterms,
)
from .parser import PrivateDecl, ProtocolSpec
from .semantics import DEFAULT_MAX_UNFOLD, Semantics, Transition

NO_ORPHANS = "NoOrphans"
PRESERVATION = "PreservationOfCoherence"
CRASH_PRESERVATION = "CrashPreservation"
WEAKENING = "Weakening"
PROPERTIES = (NO_ORPHANS, PRESERVATION, CRASH_PRESERVATION, WEAKENING)


@dataclass(frozen=True)
class Budgets:
    max_states: int = 10_000
    max_depth: int = 64
    max_unfold: int = DEFAULT_MAX_UNFOLD


@dataclass(frozen=True)
class Edge:
    src: int
    label: TransitionLabel
    rule: str
    dst: int


@dataclass
class StateGraph:
    states: list[GlobalType]
    index: dict[str, int]
    edges: list[Edge]
    budgets: Budgets
    truncated: bool
    publics: tuple[PublicDecl, ...] = ()
    initial: int = 0

    def out_edges(self, sid: int) -> list[Edge]:
        return [e for e in self.edges if e.src == sid]


def explore(g0: GlobalType, budgets: Budgets = Budgets(), publics: Iterable[PublicDecl] = (),
            crash_only: Iterable[Participant] | None = None) -> StateGraph:
    """Breadth-first closure of the transition relation from ``normalize(g0)``.

    States are numbered in discovery order; each state's transitions are taken
    in canonical label order. ``truncated`` records whether any budget cut
    the graph short.
    """
    sem = Semantics(budgets.max_unfold, crash_only)
    start = normalize(g0)
    states = [start]
    index = {canonical_key(start): 0}
    depth = [0]
    edges: list[Edge] = []
    truncated = False
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        if depth[sid] >= budgets.max_depth:
            if sem.enabled(states[sid]):
                truncated = True
            continue
        for t in sem.enabled(states[sid]):
            key = canonical_key(t.successor)
            dst = index.get(key)
            if dst is None:
                if len(states) >= budgets.max_states:
                    truncated = True
                    continue
                dst = len(states)
                index[key] = dst
                states.append(t.successor)
                depth.append(depth[sid] + 1)
                queue.append(dst)
            edges.append(Edge(sid, t.label, t.rule, dst))
    return StateGraph(states, index, edges, budgets, truncated or sem.truncated, tuple(publics))


# --- properties -------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    state: int
    label: str
    diagnosis: str


@dataclass
class PropertyVerdict:
    property: str
    checked_states: int = 0
    violations: list[Violation] = field(default_factory=list)
    applicable: bool = True

    @property
    def holds(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if not self.applicable:
            return f"{self.property}: NotApplicable"
        return f"{self.property}: {len(self.violations)} violations in {self.checked_states} states"


class _Oracle:
    """Coherence of graph states under their runtime environments, memoized."""

    def __init__(self, graph: StateGraph, mode: str):
        self.graph = graph
        self.mode = mode
        self._cache: dict[int, bool] = {}

    def gamma(self, g: GlobalType):
        return runtime_gamma(g, self.graph.publics)

    def report(self, g: GlobalType, delta=None):
        return check_coherence(g, delta or {}, self.gamma(g), self.mode)

    def coherent(self, sid: int) -> bool:
        if sid not in self._cache:
            self._cache[sid] = self.report(self.graph.states[sid]).coherent
        return self._cache[sid]


def check_property(graph: StateGraph, prop: str, mode: str = RELAXED_END,
                   oracle: _Oracle | None = None) -> PropertyVerdict:
    oracle = oracle or _Oracle(graph, mode)
    verdict = PropertyVerdict(prop)
    if not oracle.coherent(graph.initial):
        verdict.applicable = False
        return verdict
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    by_src: dict[int, list[Edge]] = {}
    for e in graph.edges:
        by_src.setdefault(e.src, []).append(e)
    for sid, g in enumerate(graph.states):
        if not oracle.coherent(sid):
            continue
        verdict.checked_states += 1
        if prop == NO_ORPHANS:
            pt = participants(g)
            for e in by_src.get(sid, ()):
                extra = subjects(e.label) - pt
                if extra:
                    verdict.violations.append(Violation(
                        sid, str(e.label), "subjects outside pt: " + ", ".join(sorted(map(str, extra)))))
        elif prop == PRESERVATION:
            for e in by_src.get(sid, ()):
                if not oracle.coherent(e.dst):
                    why = "; ".join(f.message for f in oracle.report(graph.states[e.dst]).failures)
                    verdict.violations.append(Violation(sid, str(e.label), f"target {e.dst} incoherent: {why}"))
        elif prop == CRASH_PRESERVATION:
            for p in sorted(participants(g)):
                report = oracle.report(crash(g, p))
                if not report.coherent:
                    verdict.violations.append(Violation(
                        sid, str(Crash(p)), "; ".join(f.message for f in report.failures)))
        elif prop == WEAKENING:
            y = _fresh_var(g)
            delta = weaken_delta({}, y, oracle.gamma(g))
            report = oracle.report(g, delta)
            if not report.coherent:
                verdict.violations.append(Violation(sid, "", f"weakening with {y} breaks coherence"))
    return verdict


def check_properties(graph: StateGraph, props: Iterable[str] = PROPERTIES,
                     mode: str = RELAXED_END) -> list[PropertyVerdict]:
    oracle = _Oracle(graph, mode)
    return [check_property(graph, p, mode, oracle) for p in props]


def _fresh_var(g: GlobalType) -> str:
    names = {t.var for t in subterms(g) if isinstance(t, Rec)} | free_vars(g)
    k = 0
    while f"Y{k}" in names:
        k += 1
    return f"Y{k}"


# --- traces ----------------------------------------------------------------------


def sample_trace(g0: GlobalType, seed: int, max_steps: int,
                 max_unfold: int = DEFAULT_MAX_UNFOLD) -> list[Transition]:
    """Seeded uniform random walk over enabled transitions."""
    rng = random.Random(seed)
    sem = Semantics(max_unfold)
    g = normalize(g0)
    trace: list[Transition] = []
    for _ in range(max_steps):
        options = sem.enabled(g)
        if not options:
            break
        t = options[rng.randrange(len(options))]
        trace.append(t)
        g = t.successor
    return trace


# --- generation --------------------------------------------------------------------


class GenerationExhausted(RuntimeError):
    pass


_ROLES = ("a", "b", "c")
_SERVER = "srv"
_LABELS = ("L0", "L1", "L2")
_SORTS = (None, "Int", "Str")


class _Gen:
    def __init__(self, rng: random.Random, size: int):
        self.rng = rng
        self.budget = size
        self.fresh = 0
        self.rec_depth = 0

    def new_channel(self) -> str:
        self.fresh += 1
        return f"t{self.fresh}"

    def gtype(self, gamma: dict, recs: dict) -> GlobalType:
        """``gamma``: channel -> (Endpoint, Endpoint) or server role; ``recs``: var -> snapshot."""
        r = self.rng
        loops = [x for x, snap in recs.items() if snap == gamma]
        if self.budget <= 0 or r.random() < 0.15:
            if loops and r.random() < 0.7:
                return Var(r.choice(loops))
            return END
        if self.rec_depth < 2 and r.random() < 0.15:
            x = f"X{self.rec_depth}"
            if x not in recs:
                self.rec_depth += 1
                body = self.action(gamma, {**recs, x: dict(gamma)})
                self.rec_depth -= 1
                return Rec(x, body)
        return self.action(gamma, recs)

    def action(self, gamma: dict, recs: dict) -> GlobalType:
        r = self.rng
        sessions = sorted(c for c, b in gamma.items() if isinstance(b, tuple))
        publics = sorted(c for c, b in gamma.items() if isinstance(b, str))
        kinds = ["send"] * 4 if sessions else []
        if publics:
            kinds.append("req")
        kinds.append("spawn")
        if sessions and self.budget >= 2:
            kinds.append("choice")
        kind = r.choice(kinds)
        self.budget -= 1
        if kind == "send":
            return self.send(r.choice(sessions), gamma, recs)
        if kind == "choice":
            self.budget -= 1
            s = r.choice(sessions)
            p = r.choice(gamma[s])
            options = [c for c in sessions if p.ident in {e.ident for e in gamma[c]}]
            first = self.send(s, gamma, recs, sender=p)
            second = self.send(r.choice(options), gamma, recs, sender=p, avoid=first)
            return Choice((first, second))
        if kind == "req":
            k = r.choice(publics)
            server = gamma[k]
            clients = sorted({e for c in sessions for e in gamma[c]}) or [Endpoint(r.choice(_ROLES))]
            p = r.choice(clients)
            t = self.new_channel()
            opened = {**gamma, t: (p, Endpoint(server, t))}
            body = self.gtype(opened, recs)
            return Action(p, Endpoint(server), k, ((New(t), body), (ERR, self.gtype(gamma, recs))))
        ends = sorted({e for c in sessions for e in gamma[c]}) or [Endpoint(r.choice(_ROLES))]
        p = r.choice(ends)
        t = self.new_channel()
        opened = {**gamma, t: (p, Endpoint(p.role, t))}
        body = self.gtype(opened, recs)
        return Action(p, p, TAU, ((New(t), body), (ERR, self.gtype(gamma, recs))))

    def send(self, s: str, gamma: dict, recs: dict, sender: Endpoint | None = None,
             avoid: Action | None = None) -> Action:
        r = self.rng
        a, b = gamma[s]
        if sender is None:
            sender = r.choice((a, b))
        receiver = b if sender == a else a
        taken = set()
        if avoid is not None and avoid.channel == s:
            taken = {m.label for m, _ in avoid.regular()}
        labels = [x for x in _LABELS if x not in taken]
        n = min(len(labels), r.choice((1, 1, 2)))
        branches = []
        for lab in r.sample(labels, n):
            branches.append((Label(lab, r.choice(_SORTS)), self.gtype(gamma, recs)))
        closed = {c: v for c, v in gamma.items() if c != s}
        branches.append((ERR, self.gtype(closed, recs)))
        return Action(sender, receiver, s, tuple(branches))


def generate_coherent(seed: int, size: int, retries: int = 50) -> ProtocolSpec:
    """Deterministic random coherent protocol with at most ``size`` actions."""
    for attempt in range(retries):
        rng = random.Random(f"{seed}:{size}:{attempt}")
        spec = _generate(rng, size)
        gamma = header_gamma(spec.publics, spec.private_triples())
        if check_coherence(spec.body, {}, gamma, RELAXED_END).coherent:
            return spec
    raise GenerationExhausted(f"no coherent type for seed {seed}, size {size}")


def _generate(rng: random.Random, size: int) -> ProtocolSpec:
    pairs = [(x, y) for i, x in enumerate(_ROLES) for y in _ROLES[i + 1:]]
    chosen = rng.sample(pairs, rng.randint(1, len(pairs)))
    privates = [PrivateDecl(f"s{i}", Endpoint(x), Endpoint(y)) for i, (x, y) in enumerate(chosen)]
    publics = [PublicDecl("k", Endpoint(_SERVER))] if rng.random() < 0.5 else []
    gen = _Gen(rng, size)
    sessions = {d.channel: (d.first, d.second) for d in privates}
    shared = {d.channel: _SERVER for d in publics}
    if len(privates) >= 2 and rng.random() < 0.3:
        cut = rng.randint(1, len(privates) - 1)
        names = sorted(sessions)
        left = {c: sessions[c] for c in names[:cut]}
        right = {c: sessions[c] for c in names[cut:]}
        body: GlobalType = Par(gen.gtype({**shared, **left}, {}), gen.gtype({**shared, **right}, {}))
    else:
        body = gen.gtype({**shared, **sessions}, {})
    return ProtocolSpec(f"gen_{size}", tuple(publics), tuple(privates), body)
