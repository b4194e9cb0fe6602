import pytest

from ftmpst.analysis import Comm, Crash, Fail
from ftmpst.kernel import Label, New, participant, render, structurally_equal
from ftmpst.parser import parse_type
from ftmpst.semantics import (
    AmbiguousTransition,
    NotEnabled,
    Semantics,
    apply_transition,
    enabled_transitions,
    two_step_timeout_witness,
)

P = participant


def labels(g, **kw):
    return {(str(t.label), t.rule) for t in enabled_transitions(g, **kw)}


def test_enabled_purchase(purchase):
    assert labels(purchase.body) == {
        ("server -> api : s Purchase(Order)", "com"),
        ("server !fail s", "com-snd-fail"),
        ("api !fail s", "com-rcv-fail"),
        ("client !fail t", "concur"),
        ("server crash", "crash"),
        ("api crash", "crash"),
        ("client crash", "crash"),
    }


def test_enabled_purchase_response(purchase_response):
    assert labels(purchase_response.body) == {
        ("api -> server : s OrderPurchased(Id)", "com"),
        ("api !fail s", "com-snd-fail"),
        ("server !fail s", "com-rcv-fail"),
        ("client !fail t", "concur"),
        ("server crash", "crash"),
        ("api crash", "crash"),
        ("client crash", "crash"),
    }


def test_order_is_canonical(purchase):
    kinds = [type(t.label).__name__ for t in enabled_transitions(purchase.body)]
    assert kinds == sorted(kinds, key=["Comm", "Fail", "Crash"].index)


def test_end_is_stuck():
    assert enabled_transitions(parse_type("end")) == []


def test_com_never_fires_err():
    g = parse_type("a -> b : s { ERR . b -> c : u { M . end, ERR . end } }")
    assert not any(isinstance(t.label, Comm) and t.label.channel == "s" for t in enabled_transitions(g))


def test_receiver_timeout_only_on_label_actions():
    g = parse_type("c -> srv : k { new t . srv.t -> c : t { M . end, ERR . end }, ERR . end }")
    got = labels(g)
    assert ("c !fail k", "com-snd-fail") in got
    assert not any(lab.startswith("srv !fail") for lab, _ in got)


def test_spawned_thread_cannot_overtake_its_request():
    g = parse_type("c -> srv : k { new t . srv.t -> c : t { M . end, ERR . end }, ERR . end }")
    assert not any("srv.t" in lab for lab, _ in labels(g))


def test_concur_needs_label_in_every_branch():
    g = parse_type("a -> b : s { M . c -> d : u { N . end, ERR . end }, ERR . end }")
    assert not any(lab.startswith("c -> d") for lab, _ in labels(g))
    g = parse_type("a -> b : s { M . c -> d : u { N . end, ERR . end }, ERR . c -> d : u { N . end, ERR . end } }")
    assert ("c -> d : u N", "concur") in labels(g)


def test_concur_blocks_prefix_participants(purchase):
    # the client's channel t is also used after the server's sends
    assert not any(lab.startswith("server -> client") for lab, _ in labels(purchase.body))


def test_crash_of_crashed_endpoint_is_still_reported_if_live_elsewhere():
    g = parse_type("a~ -> b : s { ERR . a -> c : u { M . end, ERR . end } }")
    assert ("a crash", "crash") in labels(g)


def test_choice_commits_on_initiator():
    g = parse_type("choice { a -> b : s { M . end, ERR . end } | a -> c : u { N . end, ERR . end } }")
    succ = apply_transition(g, Comm(P("a"), P("c"), "u", Label("N")))
    assert render(succ) == "end"
    assert ("a !fail s", "choice") in labels(g)


def test_choice_br_moves_all_branches():
    text = ("choice { a -> b : s { M . end, ERR . end } || d -> e : v { K . end, ERR . end }"
            " | a -> c : u { N . end, ERR . end } || d -> e : v { K . end, ERR . end } }")
    g = parse_type(text)
    assert ("d -> e : v K", "choice-br") in labels(g)


def test_rec_fresh_names(restart):
    t = next(t for t in enabled_transitions(restart.body) if isinstance(t.label, Comm))
    assert t.label.message == New("t#1")
    assert t.rule == "rec"
    assert "server.t#1" in render(t.successor)


def test_unfold_budget_truncates(restart):
    sem = Semantics(max_unfold=0)
    assert [t for t in sem.enabled(restart.body) if not isinstance(t.label, Crash)] == []
    assert sem.truncated


def test_crash_only_restriction(purchase):
    got = Semantics(crash_only=[P("api")]).enabled(purchase.body)
    assert [str(t.label) for t in got if isinstance(t.label, Crash)] == ["api crash"]


def test_fire_err_mutation_diverges(purchase):
    sem = Semantics(fire_err=True)
    got = {str(t.label) for t in sem.enabled(purchase.body)}
    assert "server -> api : s ERR" in got
    assert len(got) > len(labels(purchase.body))


def test_apply_not_enabled(purchase):
    with pytest.raises(NotEnabled):
        apply_transition(purchase.body, Fail(P("client"), "s"))


def test_apply_ambiguous_then_disambiguated():
    g = parse_type("a -> b : s { M . end, ERR . end } || a -> b : s { M . c -> d : u { K . end, ERR . end }, ERR . end }")
    label = Comm(P("a"), P("b"), "s", Label("M"))
    with pytest.raises(AmbiguousTransition) as info:
        apply_transition(g, label)
    paths = sorted(t.path for t in info.value.candidates)
    assert paths == [("L", 0), ("R", 0)]
    want = parse_type("a -> b : s { M . c -> d : u { K . end, ERR . end }, ERR . end }")
    path = next(t.path for t in info.value.candidates if structurally_equal(t.successor, want))
    assert structurally_equal(apply_transition(g, label, path=path), want)


def test_two_step_witness_order(purchase_response):
    first, second, third = two_step_timeout_witness(purchase_response.body)
    assert (str(first.label), first.rule) == ("api !fail s", "com-snd-fail")
    assert (str(second.label), second.rule) == ("server !fail s", "com-rcv-fail")
    assert str(third.label) == "server -> client : t UnexpectedError"


def test_no_witness_without_err_continuation():
    assert two_step_timeout_witness(parse_type("end")) is None
