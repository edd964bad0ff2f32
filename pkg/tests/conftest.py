import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from imagescc.geometry import TriangulationMesh, square_mesh

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log():
    def log(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return log


@pytest.fixture(scope="session")
def two_triangles():
    """Unit square split along its diagonal."""
    return TriangulationMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], name="two")


@pytest.fixture(scope="session")
def four_triangles():
    """Irregular four-triangle fan around an off-centre interior vertex."""
    v = [[0, 0], [1, 0], [1.1, 0.9], [0, 1], [0.45, 0.55]]
    return TriangulationMesh(v, [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]], name="fan4")


@pytest.fixture(scope="session")
def square4():
    return square_mesh(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
