import json

import pytest

from conftest import CORPUS, corpus_text, load
from ftmpst.analysis import crash
from ftmpst.cli import run_cli
from ftmpst.explorer import check_properties, explore, sample_trace
from ftmpst.export import graph_dot, graph_json, report_json, trace_json
from ftmpst.coherence import STRICT, check_coherence
from ftmpst.kernel import END, Action, Par, Rec, Var, participant, render, structurally_equal
from ftmpst.parser import ParseError, SourceSpan, WellFormednessError, parse, parse_type
from ftmpst.printer import collect_garbage, pretty_print

from conftest import gamma_of


# --- parser --------------------------------------------------------------------


def test_parse_purchase_shape(purchase):
    assert purchase.name == "purchase"
    assert [d.channel for d in purchase.privates] == ["s", "t"]
    g = purchase.body
    assert isinstance(g, Action) and str(g.sender) == "server" and g.channel == "s"
    assert [str(m) for m, _ in g.branches] == ["Purchase(Order)", "ERR"]


def test_parse_end():
    assert parse("protocol p end").body == END


def test_parse_restart_header(restart):
    assert [(d.channel, str(d.server)) for d in restart.publics] == [("k_server", "server"), ("k_api", "api")]
    assert isinstance(restart.body, Rec)


def test_comments_and_fresh_names():
    g = parse_type("a -> b.t#1 : t#1 { M . end, ERR . end } # trailing")
    assert str(g.receiver) == "b.t#1" and g.channel == "t#1"


def test_par_right_associative_and_parens():
    a = "a -> b : s { M . end, ERR . end }"
    g = parse_type(f"{a} || {a} || {a}")
    assert isinstance(g, Par) and isinstance(g.right, Par)
    h = parse_type(f"({a} || {a}) || {a}")
    assert isinstance(h.left, Par)
    assert render(h).startswith("(")


def test_rec_counter_and_crash_marks_round_trip():
    text = "rec X^1 . a~ -> b.t : s { ERR . X }"
    assert render(parse_type(text)) == text


def test_nested_choice_is_flattened():
    a, b, c = ("a -> b : s { M . end, ERR . end }", "a -> c : u { M . end, ERR . end }",
               "a -> d : v { M . end, ERR . end }")
    g = parse_type(f"choice {{ {a} | choice {{ {b} | {c} }} }}")
    assert len(g.branches) == 3


@pytest.mark.parametrize("text,expected", [
    ("protocol p\na -> b : s { M . end ", "}"),
    ("protocol p\na -> : s { M . end }", "ident"),
    ("protocol\n", "ident"),
])
def test_parse_errors_carry_spans(text, expected):
    with pytest.raises(ParseError) as info:
        parse(text)
    err = info.value
    assert expected in err.expected
    lines = text.split("\n")
    assert 1 <= err.span.line <= len(lines) + 1 and err.span.length >= 1


def test_unexpected_character():
    with pytest.raises(ParseError) as info:
        parse("protocol p\n  a -> b : s { M . end, ERR . end } $")
    assert info.value.span == SourceSpan(2, 37, 1)


@pytest.mark.parametrize("body,kind", [
    ("a -> b : s { M . end, M . end, ERR . end }", "duplicate-label"),
    ("a -> b : s { M . end, ERR . end, ERR . end }", "multiple-err"),
    ("a -> b : s { new t . end, M . end, ERR . end }", "new-shape"),
    ("a -> b : s { new tau . end, ERR . end }", "new-tau"),
    ("a -> b : tau { new t . end, ERR . end }", "tau-shape"),
    ("rec X . X", "unguarded"),
    ("rec X . a -> b : s { M . end, ERR . end } || X", "unguarded"),
])
def test_well_formedness(body, kind):
    with pytest.raises(WellFormednessError) as info:
        parse(f"protocol p\nprivate s : a, b\n{body}")
    assert info.value.kind == kind
    assert info.value.span.line >= 1


def test_duplicate_label_message():
    with pytest.raises(WellFormednessError, match="duplicate label OrderPurchased"):
        parse("protocol p\napi -> server : s { OrderPurchased(Id) . end, OrderPurchased(X) . end, ERR . end }")


def test_duplicate_declaration():
    with pytest.raises(WellFormednessError) as info:
        parse("protocol p\nprivate s : a, b\npublic s : c\nend")
    assert info.value.kind == "duplicate-channel"


def test_public_server_misuse():
    with pytest.raises(WellFormednessError) as info:
        parse("protocol p\npublic k : srv\nprivate s : srv, a\nsrv -> a : s { M . end, ERR . end }")
    assert info.value.kind == "public-server"


def test_spans_cover_every_node(restart):
    from ftmpst.parser import _walk_paths
    text = corpus_text("restart.mpst")
    lines = text.split("\n")
    for path, _ in _walk_paths(restart.body):
        span = restart.spans[path]
        assert 1 <= span.line <= len(lines)
        assert 1 <= span.column <= len(lines[span.line - 1])


# --- printer --------------------------------------------------------------------


@pytest.mark.parametrize("name", ["purchase.mpst", "purchase_response.mpst", "restart.mpst"])
def test_round_trip_corpus(name):
    spec = load(name)
    again = parse(pretty_print(spec))
    assert structurally_equal(again.body, spec.body)
    assert again.privates == spec.privates and again.publics == spec.publics


def test_print_end():
    from ftmpst.parser import ProtocolSpec
    assert pretty_print(ProtocolSpec("p", (), (), END)).endswith("\nend\n")


def test_crash_prints_marker(purchase_response):
    from ftmpst.parser import ProtocolSpec
    text = pretty_print(ProtocolSpec("p", (), (), crash(purchase_response.body, participant("api"))))
    assert "api~ -> server : s" in text and "OrderPurchased" not in text


def test_gc_display(purchase):
    g = crash(crash(purchase.body, participant("server")), participant("api"))
    assert render(g) == "server~ -> api~ : s { ERR . server~ -> client : t { ERR . end } }"
    assert render(collect_garbage(g)) == "server~ -> client : t { ERR . end }"
    assert render(collect_garbage(crash(g, participant("client")))) == "end"


# --- export --------------------------------------------------------------------


def test_report_json(purchase):
    report = check_coherence(purchase.body, {}, gamma_of(purchase), STRICT)
    data = report_json(report, purchase)
    assert list(data) == ["protocol", "mode", "verdict", "failures"]
    assert data["verdict"] == "Incoherent"
    assert list(data["failures"][0]) == ["rule", "path", "message", "span"]
    assert data["failures"][0]["span"]["line"] == 9


def test_graph_json_and_dot(purchase):
    graph = explore(purchase.body)
    data = graph_json(graph, check_properties(graph))
    assert list(data) == ["budgets", "truncated", "states", "edges", "properties"]
    assert data["states"][0] == {"id": 0, "term": render(graph.states[0])}
    edge = data["edges"][0]
    assert list(edge) == ["src", "label", "rule", "dst"]
    assert list(edge["label"]) == ["kind", "subjects", "channel", "message"]
    assert [p["name"] for p in data["properties"]] == [
        "NoOrphans", "PreservationOfCoherence", "CrashPreservation", "Weakening"]
    dot = graph_dot(graph)
    assert dot.startswith("digraph states {")
    assert "style=dashed" in dot
    crash_lines = [line for line in dot.splitlines() if "crash: " in line]
    assert crash_lines and all("dashed" in line for line in crash_lines)


def test_trace_json(purchase):
    data = trace_json(42, sample_trace(purchase.body, 42, 5))
    assert data["seed"] == 42 and data["steps"]
    assert list(data["steps"][0])[:4] == ["src", "label", "rule", "dst"]


# --- cli ------------------------------------------------------------------------


def cli(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_check(capsys):
    code, out, _ = cli(capsys, "check", CORPUS / "purchase.mpst")
    assert code == 0 and out.startswith("Coherent (relaxed-end)")
    code, out, _ = cli(capsys, "check", CORPUS / "purchase.mpst", "--strict-end")
    assert code == 1 and "[end]" in out
    code, out, _ = cli(capsys, "check", CORPUS / "mutants" / "mixed_initiator.mpst")
    assert code == 1 and "[sum]" in out


def test_cli_check_json(capsys, tmp_path):
    out = tmp_path / "r.json"
    cli(capsys, "check", CORPUS / "restart.mpst", "--json", out)
    assert json.loads(out.read_text())["verdict"] == "Coherent"


def test_cli_usage_errors(capsys, tmp_path):
    assert cli(capsys, "nope")[0] == 2
    assert cli(capsys, "check")[0] == 2
    assert cli(capsys, "check", tmp_path / "missing.mpst")[0] == 2
    bad = tmp_path / "bad.mpst"
    bad.write_text("protocol p\na -> b : s { M . end ")
    code, _, err = cli(capsys, "check", bad)
    assert code == 2 and ":2:" in err
    assert cli(capsys, "explore", CORPUS / "purchase.mpst", "--props", "Liveness")[0] == 2
    assert cli(capsys, "apply", CORPUS / "purchase.mpst", "--step", "99")[0] == 2


def test_cli_steps(capsys):
    code, out, _ = cli(capsys, "steps", CORPUS / "purchase_response.mpst")
    assert code == 0 and "server !fail s" in out
    assert out.splitlines()[0] == "[0] com: api -> server : s OrderPurchased(Id)"


def test_cli_apply_output_is_coherent(capsys, tmp_path):
    code, out, _ = cli(capsys, "apply", CORPUS / "purchase_response.mpst", "--step", "3")
    assert code == 0 and "api -> server~ : s" in out
    path = tmp_path / "next.mpst"
    path.write_text(out)
    assert cli(capsys, "check", path)[0] == 0


def test_cli_crash(capsys):
    code, out, _ = cli(capsys, "crash", CORPUS / "purchase_response.mpst", "--who", "api")
    assert code == 0 and "api~ -> server : s" in out
    code, _, err = cli(capsys, "crash", CORPUS / "mutants" / "missing_err.mpst", "--who", "api")
    assert code == 1 and "ERR" in err


def test_cli_explore(capsys, tmp_path):
    js, dot = tmp_path / "g.json", tmp_path / "g.dot"
    code, out, _ = cli(capsys, "explore", CORPUS / "purchase.mpst", "--props", "all", "--json", js, "--dot", dot)
    assert code == 0
    assert out.count(": 0 violations") == 4
    assert json.loads(js.read_text())["truncated"] is False
    assert dot.read_text().startswith("digraph")
    code, out, _ = cli(capsys, "explore", CORPUS / "purchase.mpst", "--props", "none", "--crash-only", "api")
    assert code == 0 and "violations" not in out


def test_cli_explore_incoherent_exits_1(capsys, tmp_path):
    path = tmp_path / "m.mpst"
    path.write_text(corpus_text("mutants/mixed_initiator.mpst"))
    code, out, _ = cli(capsys, "explore", path)
    assert code == 1 and "NotApplicable" in out


def test_cli_trace(capsys, tmp_path):
    js = tmp_path / "t.json"
    a = cli(capsys, "trace", CORPUS / "purchase.mpst", "--seed", 42, "--steps", 10, "--json", js)
    b = cli(capsys, "trace", CORPUS / "purchase.mpst", "--seed", 42, "--steps", 10)
    assert a == b and a[0] == 0
    assert json.loads(js.read_text())["seed"] == 42
