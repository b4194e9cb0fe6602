"""Parser for ``.mpst`` protocol files.

    spec      := "protocol" IDENT decl* gtype
    decl      := "public" IDENT ":" endpoint | "private" IDENT ":" endpoint "," endpoint
    gtype     := prefix ("||" gtype)?
    prefix    := "end" | VAR | "rec" VAR ["^" NUM] "." gtype | "(" gtype ")"
               | "choice" "{" gtype ("|" gtype)+ "}"
               | endpoint "->" endpoint ":" chan "{" branch ("," branch)* "}"
    endpoint  := IDENT ["." (IDENT | NUM)] ["~"]
    branch    := IDENT ["(" IDENT ")"] "." gtype | "new" IDENT "." gtype | "ERR" "." gtype

``#`` starts a line comment unless it continues an identifier (``t#1``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .analysis import PublicDecl
from .kernel import (
    TAU,
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
    Rec,
    Var,
    children,
    render,
)

KEYWORDS = {"protocol", "public", "private", "end", "rec", "choice", "new", "ERR", "tau"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*(?:\#[0-9]+)?)
  | (?P<comment>\#[^\n]*)
  | (?P<num>[0-9]+)
  | (?P<punct>->|\|\||[|{}(),.:~^])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan, expected: frozenset[str] = frozenset()):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.expected = expected


class WellFormednessError(ValueError):
    def __init__(self, kind: str, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.kind = kind
        self.span = span


@dataclass(frozen=True)
class PrivateDecl:
    channel: str
    first: Endpoint
    second: Endpoint


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    publics: tuple[PublicDecl, ...]
    privates: tuple[PrivateDecl, ...]
    body: GlobalType
    spans: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def private_triples(self):
        return [(d.channel, d.first, d.second) for d in self.privates]


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            span = SourceSpan(line, pos - line_start + 1, 1)
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        value = m.group()
        if kind == "ident" and value in KEYWORDS:
            kind = value
        elif kind == "punct":
            kind = value
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, value, pos, line, pos - line_start + 1))
        for i, ch in enumerate(value):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        pos = m.end()
    toks.append(_Tok("EOF", "", pos, line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, well_formed: bool = True):
        self.text = text
        self.well_formed = well_formed
        self.toks = _tokenize(text)
        self.i = 0
        self.node_spans: dict[int, SourceSpan] = {}
        self.keep: list = []  # spans are keyed by id(); keep nodes alive

    # -- token helpers --------------------------------------------------------

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def span(self, tok: _Tok, end: _Tok | None = None) -> SourceSpan:
        end = end or tok
        length = max(1, end.offset + len(end.text) - tok.offset)
        return SourceSpan(tok.line, tok.col, length)

    def error(self, expected: set[str]) -> ParseError:
        t = self.tok
        found = "end of input" if t.kind == "EOF" else repr(t.text)
        exp = ", ".join(sorted(expected))
        return ParseError(f"expected {exp}; found {found}", self.span(t), frozenset(expected))

    def expect(self, *kinds: str) -> _Tok:
        if self.tok.kind not in kinds:
            raise self.error(set(kinds))
        t = self.tok
        self.i += 1
        return t

    def accept(self, kind: str) -> _Tok | None:
        if self.tok.kind == kind:
            return self.expect(kind)
        return None

    def mark(self, node, start: _Tok):
        self.node_spans[id(node)] = self.span(start, self.toks[self.i - 1])
        self.keep.append(node)
        return node

    # -- grammar ----------------------------------------------------------------

    def spec(self) -> ProtocolSpec:
        self.expect("protocol")
        name = self.expect("ident").text
        publics: list[PublicDecl] = []
        privates: list[PrivateDecl] = []
        seen: dict[str, _Tok] = {}
        while self.tok.kind in ("public", "private"):
            kw = self.expect("public", "private")
            ctok = self.expect("ident")
            if ctok.text in seen:
                raise WellFormednessError("duplicate-channel", f"channel {ctok.text} declared twice", self.span(ctok))
            seen[ctok.text] = ctok
            self.expect(":")
            if kw.kind == "public":
                publics.append(PublicDecl(ctok.text, self.endpoint()))
            else:
                a = self.endpoint()
                self.expect(",")
                privates.append(PrivateDecl(ctok.text, a, self.endpoint()))
        body = self.gtype()
        self.expect("EOF")
        return ProtocolSpec(name, tuple(publics), tuple(privates), body)

    def gtype(self) -> GlobalType:
        start = self.tok
        left = self.prefix()
        if self.accept("||"):
            right = self.gtype()
            return self.mark(Par(left, right), start)
        return left

    def prefix(self) -> GlobalType:
        start = self.tok
        k = start.kind
        if k == "end":
            self.i += 1
            return self.mark(End(), start)
        if k == "(":
            self.i += 1
            g = self.gtype()
            self.expect(")")
            return g
        if k == "rec":
            self.i += 1
            var = self.var_name()
            n = 0
            if self.accept("^"):
                n = int(self.expect("num").text)
            self.expect(".")
            body = self.gtype()
            return self.mark(Rec(var, body, n), start)
        if k == "choice":
            self.i += 1
            self.expect("{")
            branches = [self.gtype()]
            while self.accept("|"):
                branches.append(self.gtype())
            if len(branches) < 2:
                raise self.error({"|"})
            self.expect("}")
            flat: list[GlobalType] = []
            for b in branches:
                flat.extend(b.branches if isinstance(b, Choice) else [b])
            return self.mark(Choice(tuple(flat)), start)
        if k == "ident":
            if self.peek().kind in ("->", ".", "~"):
                return self.action()
            if start.text[0].isupper():
                self.i += 1
                return self.mark(Var(start.text), start)
            self.i += 1
            raise self.error({"->"})
        raise self.error({"end", "rec", "choice", "(", "endpoint", "variable"})

    def var_name(self) -> str:
        t = self.expect("ident")
        if not t.text[0].isupper():
            raise ParseError("recursion variables start with an uppercase letter", self.span(t))
        return t.text

    def endpoint(self) -> Endpoint:
        role = self.expect("ident").text
        index = "0"
        if self.tok.kind == "." and self.peek().kind in ("ident", "num"):
            self.i += 1
            index = self.expect("ident", "num").text
        alive = not self.accept("~")
        return Endpoint(role, index, alive)

    def action(self) -> Action:
        start = self.tok
        p = self.endpoint()
        self.expect("->")
        q = self.endpoint()
        self.expect(":")
        ctok = self.expect("ident", "tau")
        self.expect("{")
        branches = [self.branch()]
        while self.accept(","):
            branches.append(self.branch())
        self.expect("}")
        node = Action(p, q, ctok.text, self._order(branches))
        self.mark(node, start)
        if self.well_formed:
            self._check_action(node, start)
        return node

    def _order(self, branches):
        regs = [(m, g) for m, g, _ in branches if not isinstance(m, Err)]
        errs = [(m, g) for m, g, _ in branches if isinstance(m, Err)]
        return tuple(regs + errs)

    def branch(self) -> tuple[Message, GlobalType, _Tok]:
        start = self.tok
        m: Message
        if self.accept("ERR"):
            m = Err()
        elif self.accept("new"):
            if self.tok.kind == "tau":
                raise WellFormednessError("new-tau", "tau cannot be created by new", self.span(self.tok))
            m = New(self.expect("ident").text)
        else:
            label = self.expect("ident").text
            sort = None
            if self.accept("("):
                sort = self.expect("ident").text
                self.expect(")")
            m = Label(label, sort)
        self.expect(".")
        return m, self.gtype(), start

    def _check_action(self, a: Action, start: _Tok):
        where = self.span(start)
        msgs = [m for m, _ in a.branches]
        if sum(isinstance(m, Err) for m in msgs) > 1:
            raise WellFormednessError("multiple-err", "more than one ERR branch", where)
        labels = [m.label for m in msgs if isinstance(m, Label)]
        for lab in labels:
            if labels.count(lab) > 1:
                raise WellFormednessError("duplicate-label", f"duplicate label {lab}", where)
        news = [m for m in msgs if isinstance(m, New)]
        regular = [m for m in msgs if not isinstance(m, Err)]
        if news and len(regular) != 1:
            raise WellFormednessError("new-shape", "a new branch must be the only non-ERR branch", where)
        if a.channel == TAU:
            if a.sender.ident != a.receiver.ident:
                raise WellFormednessError("tau-shape", "actions over tau need sender = receiver", where)
            if regular and not news:
                raise WellFormednessError("tau-shape", "actions over tau carry a new branch", where)


def _check_guarded(g: GlobalType, unguarded: frozenset[str], spans, path=()):
    match g:
        case Var(x) if x in unguarded:
            raise WellFormednessError("unguarded", f"recursion on {x} is not guarded by an action",
                                      spans.get(path, SourceSpan(1, 1, 1)))
        case Rec(x, body, _):
            _check_guarded(body, unguarded | {x}, spans, path + ("body",))
        case Action():
            for i, (_, k) in enumerate(g.branches):
                _check_guarded(k, frozenset(), spans, path + (i,))
        case Par(left, right):
            _check_guarded(left, unguarded, spans, path + ("L",))
            _check_guarded(right, unguarded, spans, path + ("R",))
        case Choice(branches):
            for i, b in enumerate(branches):
                _check_guarded(b, unguarded, spans, path + (i,))


def _check_public_servers(spec: ProtocolSpec):
    servers = {d.server.ident: d.channel for d in spec.publics}
    if not servers:
        return
    for path, node in _walk_paths(spec.body):
        if not isinstance(node, Action):
            continue
        where = spec.spans.get(path, SourceSpan(1, 1, 1))
        if node.sender.ident in servers:
            raise WellFormednessError("public-server", f"public server {node.sender.ident} sends", where)
        if node.receiver.ident in servers:
            request = node.channel == servers[node.receiver.ident] and all(
                isinstance(m, (New, Err)) for m, _ in node.branches)
            if not request:
                raise WellFormednessError(
                    "public-server", f"public server {node.receiver.ident} only receives requests", where)


def _walk_paths(g: GlobalType, path=()):
    yield path, g
    match g:
        case Rec(_, body, _):
            yield from _walk_paths(body, path + ("body",))
        case Par(left, right):
            yield from _walk_paths(left, path + ("L",))
            yield from _walk_paths(right, path + ("R",))
        case Choice(branches) | Action(branches=branches):
            for i, b in enumerate(branches):
                yield from _walk_paths(b[1] if isinstance(b, tuple) else b, path + (i,))


def _collect_spans(g: GlobalType, node_spans: dict[int, SourceSpan]) -> dict[tuple, SourceSpan]:
    return {p: node_spans[id(n)] for p, n in _walk_paths(g) if id(n) in node_spans}


def parse(text: str, well_formed: bool = True) -> ProtocolSpec:
    """Parse a protocol file; raises ParseError or WellFormednessError.

    ``well_formed=False`` skips the per-action shape checks so that
    ill-formed inputs can still reach the coherence checker.
    """
    ps = _Parser(text, well_formed)
    spec = ps.spec()
    spans = _collect_spans(spec.body, ps.node_spans)
    spec = ProtocolSpec(spec.name, spec.publics, spec.privates, spec.body, spans)
    if not well_formed:
        return spec
    _check_guarded(spec.body, frozenset(), spans)
    _check_public_servers(spec)
    return spec


def parse_type(text: str) -> GlobalType:
    """Parse a bare global type (no header)."""
    ps = _Parser(text)
    g = ps.gtype()
    ps.expect("EOF")
    _check_guarded(g, frozenset(), _collect_spans(g, ps.node_spans))
    return g


def parse_file(path, well_formed: bool = True) -> ProtocolSpec:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), well_formed)


__all__ = [
    "ParseError",
    "PrivateDecl",
    "ProtocolSpec",
    "SourceSpan",
    "WellFormednessError",
    "children",
    "parse",
    "parse_file",
    "parse_type",
    "render",
]
