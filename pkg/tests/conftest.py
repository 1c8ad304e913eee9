import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from anpmatch.synth import fixture_dir  # noqa: E402

DATA = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def fixture_path():
    return fixture_dir()


@pytest.fixture(scope="session")
def fixture_ini(fixture_path):
    return fixture_path / "fixture.ini"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# -- acceptance reporting ----------------------------------------------------------
# Tests marked @pytest.mark.acceptance(n, title) get one PASS/FAIL line each in the
# terminal summary, so the lines survive output capture.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        n, title = marker.args
        prev = _ACCEPTANCE.get(n, (title, True))[1]
        _ACCEPTANCE[n] = (title, prev and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {title}")
