import math

import pytest

from cavity_biphoton import ExperimentConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def config():
    return ExperimentConfig()


@pytest.fixture
def singlet_config():
    return ExperimentConfig().replace(cavity__birefringence_phase_rad=math.pi)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
