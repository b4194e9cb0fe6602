from importlib import resources

import pytest

from ftmpst.coherence import header_gamma
from ftmpst.parser import parse

CORPUS = resources.files("ftmpst") / "corpus"


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def load(name: str, well_formed: bool = True):
    return parse(corpus_text(name), well_formed)


def gamma_of(spec):
    return header_gamma(spec.publics, spec.private_triples())


@pytest.fixture(scope="session")
def purchase():
    return load("purchase.mpst")


@pytest.fixture(scope="session")
def purchase_response():
    return load("purchase_response.mpst")


@pytest.fixture(scope="session")
def restart():
    return load("restart.mpst")


# --- one pass/fail line per acceptance criterion --------------------------------

_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    if _results.get(number, ("PASS",))[0] == "FAIL":
        outcome = "FAIL"
    _results[number] = (outcome, title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcome, title = _results[number]
        terminalreporter.write_line(f"[{outcome}] {number}. {title}")
