import pytest

from ferrofem import verify

_ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def l0_full_study():
    """The six-level lowest-order study shared by the table-based criteria."""
    import time

    t0 = time.time()
    report = verify.run_convergence_study("l0", [4, 8, 16, 32, 64, 128])
    report.elapsed = time.time() - t0
    return report


@pytest.fixture(scope="session")
def l1_study():
    import time

    t0 = time.time()
    report = verify.run_convergence_study("l1", [4, 8, 16, 32])
    report.elapsed = time.time() - t0
    return report
