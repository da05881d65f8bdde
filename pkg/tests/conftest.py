"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_criteria: dict[str, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__ != "test_acceptance" or report.when == "teardown":
        return
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    ok = report.passed and _criteria.get(item.nodeid, (title, True))[1]
    if report.when == "call" or not report.passed:
        _criteria[item.nodeid] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for title, ok in _criteria.values():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {title}")
