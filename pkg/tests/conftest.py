from pathlib import Path

import pytest

from fjeucs.cli import bundled_corpus
from fjeucs.parser import load_policy, load_program

CORPUS = bundled_corpus()


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def taint():
    return load_policy(CORPUS / "taint.policy")


@pytest.fixture(scope="session")
def sanitize():
    return load_policy(CORPUS / "sanitize.policy")


@pytest.fixture(scope="session")
def auth():
    return load_policy(CORPUS / "auth.policy")


@pytest.fixture
def program():
    return lambda name: load_program(CORPUS / name)


# acceptance criteria append "PASS/FAIL  n. title  (detail)" lines here
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_lines() -> list[str]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
