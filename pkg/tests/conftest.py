"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import re

_CRIT = re.compile(r"test_criterion_(\d+)")
_results: dict = {}


def pytest_runtest_logreport(report):
    m = _CRIT.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n = int(m.group(1))
    if hasattr(report, "wasxfail"):
        outcome = "xfail"
    else:
        outcome = report.outcome
    _results.setdefault(n, []).append((report.nodeid.split("::")[-1], outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        rows = _results[n]
        ok = all(o == "passed" for _, o in rows)
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}"
        bad = [f"{name} ({o})" for name, o in rows if o != "passed"]
        if bad:
            line += "  [" + ", ".join(bad) + "]"
        tr.write_line(line)
