import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (outcome, detail); filled by the acceptance tests
ACCEPTANCE: dict[str, list] = {}


@pytest.fixture
def criterion(request):
    """Record a detail line for the acceptance criterion of the calling test."""
    marker = request.node.get_closest_marker("acceptance")
    key = str(marker.args[0])
    ACCEPTANCE.setdefault(key, ["NOT RUN", ""])

    def note(text):
        old = ACCEPTANCE[key][1]
        ACCEPTANCE[key][1] = f"{old}; {text}" if old else text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key = str(marker.args[0])
    entry = ACCEPTANCE.setdefault(key, ["NOT RUN", ""])
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            entry[0] = "SKIP"
            if isinstance(rep.longrepr, tuple):
                entry[1] = rep.longrepr[2].removeprefix("Skipped: ")
        elif rep.failed:
            entry[0] = "FAIL"
        elif entry[0] != "FAIL":
            entry[0] = "PASS"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}".rstrip())
