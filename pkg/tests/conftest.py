import pytest

from geoha.simulator import build_simulator, bundled_sequence, load_scenario


@pytest.fixture
def simulator():
    return build_simulator()


@pytest.fixture(scope="session")
def sequence():
    return bundled_sequence()


@pytest.fixture(scope="session")
def false_alarm():
    return load_scenario("false_alarm")


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
