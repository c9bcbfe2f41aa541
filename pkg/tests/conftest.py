import pytest

from spectral_vms.coeff_table import build_table

# Lines recorded by the acceptance suite, printed once at the end of the run.
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def table8():
    """psi table over [-8, 8]^2 at step 0.125 (covers every unit-test regime)."""
    return build_table((-8.0, 8.0), step=0.125)


@pytest.fixture(scope="session")
def sweep_tables():
    """Tables over [-30, 30]^2 at steps 0.25 and 0.125 for the interpolation sweeps."""
    return {0.25: build_table((-30.0, 30.0), step=0.25),
            0.125: build_table((-30.0, 30.0), step=0.125)}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
