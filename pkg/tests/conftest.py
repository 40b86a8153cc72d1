import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from segres import kernels  # noqa: E402

# criterion number -> (title, detail) filled in by the acceptance tests
ACCEPTANCE_NOTES = {}


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    """Every importable kernel backend, so both implementations get tested."""
    return kernels.backends()[request.param]


@pytest.fixture
def note():
    def _note(number, detail):
        ACCEPTANCE_NOTES[number] = detail

    return _note


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return None if mark is None else (mark.args[0], mark.args[1])


_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    failed = report.failed
    prev = _outcomes.get(crit)
    if report.when == "call" or failed:
        _outcomes[crit] = "FAIL" if failed or prev == "FAIL" else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.criterion = _criterion(item)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), result in sorted(_outcomes.items()):
        detail = ACCEPTANCE_NOTES.get(number, "")
        line = f"{result} criterion {number:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
