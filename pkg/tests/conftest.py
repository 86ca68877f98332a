import numpy as np
import pytest

from guidance_lab.mixtures import Component, LabeledDistribution
from guidance_lab.schedule import NoiseSchedule

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_atoms():
    return LabeledDistribution.atoms([[1.0], [-1.0]], ["+", "-"])


@pytest.fixture
def ou():
    return NoiseSchedule.canonical_ou()


@pytest.fixture
def toy():
    return LabeledDistribution((
        Component(0.25, "orange", np.array([-1.5, 0.0]), 0.25),
        Component(0.25, "orange", np.array([1.5, 0.0]), 0.25),
        Component(0.25, "gray", np.array([0.0, 2.5]), 0.35),
        Component(0.25, "gray", np.array([0.0, -2.5]), 0.35),
    ), radius=3.0)
