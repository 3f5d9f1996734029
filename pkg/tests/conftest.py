import pytest

from helpers import BOUND_LEDGER, CRITERION_NOTES

_criteria: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if status == "SKIP" or _criteria.get(n) != "FAIL":
            _criteria[n] = status


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    tr.section("lower-bound ledger")
    tr.write_line(f"ELBO <= ln Z + {BOUND_LEDGER.tol:g} checks: {BOUND_LEDGER.checks}, "
                  f"violations: {len(BOUND_LEDGER.violations)}")
    for where, elbo, log_z in BOUND_LEDGER.violations[:20]:
        tr.write_line(f"  violation {where}: elbo={elbo!r} lnZ={log_z!r}")
    if _criteria:
        tr.section("acceptance criteria")
        for n in sorted(_criteria):
            status = _criteria[n]
            if n == 2 and status == "PASS" and BOUND_LEDGER.violations:
                status = "FAIL"  # the bound must hold suite-wide, not only inside its own test
            tr.write_line(f"criterion {n}: {status}")
            for text in CRITERION_NOTES.get(n, []):
                tr.write_line(f"    {text}")


def pytest_sessionfinish(session, exitstatus):
    if BOUND_LEDGER.violations and exitstatus == 0:
        session.exitstatus = 1
