import numpy as np
import pytest

from hsmmse.cube import HyperCube, WavenumberAxis
from hsmmse.synth import default_scene_spec, generate_scene

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_cube(data, start=900.0, step=1.0):
    data = np.asarray(data, dtype=float)
    return HyperCube(data, WavenumberAxis(start, step, data.shape[2]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scene64():
    return generate_scene(default_scene_spec(64))


@pytest.fixture(scope="session")
def scene32():
    return generate_scene(default_scene_spec(32))
