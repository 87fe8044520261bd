import json
from pathlib import Path

import numpy as np
import pytest

from setrisk import FiniteProbSpace, RandomVector

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def frozen():
    return json.loads((FIXTURES / "frozen.json").read_text())


def random_space(rng, n):
    p = rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n
    return FiniteProbSpace(p / p.sum())


def random_vector(rng, n, m=1, scale=1.5):
    return RandomVector(random_space(rng, n), rng.normal(scale=scale, size=(n, m)))


def coin(values):
    return RandomVector(FiniteProbSpace([0.5, 0.5]), values)


def random_polyhedral_set(rng, m, extra=3):
    """An upper set with the unit normals among its facets and 0 on its boundary."""
    from setrisk import Polyhedron

    A = np.vstack([np.eye(m), rng.uniform(0.1, 1.0, size=(extra, m))])
    b = -rng.uniform(0.0, 0.6, size=A.shape[0])
    b[rng.integers(A.shape[0])] = 0.0
    return Polyhedron(A, b)


# one line per acceptance criterion, printed after the run regardless of capture
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
