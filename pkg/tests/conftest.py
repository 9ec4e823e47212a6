import pytest

from mprktune.problems import training_suite
from mprktune.reference import generate_reference

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def training_refs():
    return {p.name: generate_reference(p) for p in training_suite()}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
