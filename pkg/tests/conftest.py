import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_acceptance_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or item.get_closest_marker("acceptance") is None:
        return
    props = dict(report.user_properties)
    status = "PASS" if report.passed else "FAIL"
    detail = props.get("detail", "")
    _acceptance_lines.append(f"{status}  {props.get('criterion', item.name)}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
