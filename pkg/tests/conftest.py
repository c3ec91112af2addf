from __future__ import annotations

import re

import pytest

from valvest import load_default_table, scenario_presets, simulate


@pytest.fixture(scope="session")
def prop_table():
    return load_default_table()


@pytest.fixture(scope="session")
def otterup():
    """14-day reference plant run shared across test modules."""
    spec = scenario_presets(duration_min=20160, seed=1)["otterup-like"]
    ds, truth = simulate(spec)
    return spec, ds, truth


_CRITERION_RESULTS: dict[int, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m:
        _CRITERION_RESULTS[int(m.group(1))] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_CRITERION_RESULTS):
        outcome = _CRITERION_RESULTS[num]
        word = "PASSED" if outcome == "passed" else "FAILED"
        terminalreporter.write_line(f"ACCEPTANCE criterion {num} {word}")
