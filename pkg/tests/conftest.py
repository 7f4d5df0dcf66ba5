"""Shared fixtures and the acceptance-criteria summary."""
import pytest

CRITERIA = {
    1: "S1 replication",
    2: "S2 replication",
    3: "semi-supervised advantage",
    4: "objective correctness",
    5: "gradient integrity",
    6: "optimal discriminator",
    7: "prior matching",
    8: "compression round trip",
    9: "reconstruction-network ordering",
    10: "CAS sanity",
    11: "determinism",
}
RESULTS = {}


@pytest.fixture
def criterion():
    """``criterion(k, passed, detail)`` records the outcome of acceptance criterion ``k``."""

    def record(k, passed, detail=""):
        RESULTS[k] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k, name in CRITERIA.items():
        if k in RESULTS:
            ok, detail = RESULTS[k]
            terminalreporter.write_line(f"C{k:<2} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        else:
            terminalreporter.write_line(f"C{k:<2} NOT RUN  {name}")
