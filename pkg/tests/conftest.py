"""Shared fixtures and the acceptance-criterion summary printed after the run."""
import numpy as np
import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion gated by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "notes": []})
        entry["ok"] = entry["ok"] and rep.passed
        entry["notes"].extend(getattr(item, "_criterion_notes", []))


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance line of the current test."""
    request.node._criterion_notes = []

    def _note(text):
        request.node._criterion_notes.append(text)

    return _note


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        status = "PASS" if r["ok"] else "FAIL"
        detail = f" [{'; '.join(r['notes'])}]" if r["notes"] else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {r['title']}{detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
