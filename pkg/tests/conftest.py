import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sabrcal.dataio import load_params, parse_surface  # noqa: E402


@pytest.fixture(scope="session")
def es_surface():
    return parse_surface("bundled:eurostoxx50")


@pytest.fixture(scope="session")
def fx_surface():
    return parse_surface("bundled:eurusd")


@pytest.fixture(scope="session")
def bundled_params():
    return load_params


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(results):
        checks = results[criterion]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {criterion:2d}: {status}")
        for ok, detail in checks:
            tr.write_line(f"    [{'ok' if ok else 'failed'}] {detail}")
