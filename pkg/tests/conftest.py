"""Shared fixtures and the acceptance-criteria summary hook.

The ``acceptance`` fixture records one pass/fail line per numbered
criterion; the collected lines are echoed in a dedicated terminal section
at the end of the run so the verdicts stay visible even when pytest
captures stdout.
"""
import time

import pytest

from gridreduce import build_network, builtin_case6, run_scenario


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)


@pytest.fixture
def acceptance(request):
    """Recorder for one pass/fail line per acceptance criterion."""

    def record(index: int, passed: bool, detail: str) -> None:
        status = "PASS" if passed else "FAIL"
        text = f"criterion {index}: {status}  {detail}"
        request.config._acceptance_lines.append((index, text))
        print(text)

    return record


@pytest.fixture(scope="session")
def case6_scenario():
    return builtin_case6()


@pytest.fixture(scope="session")
def case6_network(case6_scenario):
    return build_network(case6_scenario.network)


@pytest.fixture(scope="session")
def case6_run(case6_scenario):
    """Timed full run of the bundled scenario, shared across criteria."""
    start = time.perf_counter()
    result = run_scenario(case6_scenario)
    elapsed = time.perf_counter() - start
    return result, elapsed
