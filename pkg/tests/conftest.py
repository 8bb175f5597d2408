"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")
_outcomes = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    number = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.outcome != "passed":
        # parametrized criteria share one line: any failing case fails it
        verdict, details = _outcomes.get(number, ("PASS", []))
        if report.outcome != "passed":
            verdict = "FAIL"
        _outcomes[number] = (verdict, details + [detail] if detail else details)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        verdict, details = _outcomes[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {'; '.join(details)}".rstrip())
