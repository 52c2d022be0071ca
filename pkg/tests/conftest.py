import numpy as np
import pytest

from lsfield import LatticeConfig, PairPotential, build_fcc

ACCEPTANCE_LINES = []


def record(line):
    """Store an acceptance verdict for the end-of-session summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def potential():
    return PairPotential()


@pytest.fixture(scope="session")
def small_lattice():
    return build_fcc(LatticeConfig(nx=3, ny=3, nz=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_F(rng, det_range=(0.9, 1.1), scale=0.08):
    """Random deformation gradient with det in ``det_range``."""
    while True:
        F = np.eye(3) + scale * rng.uniform(-1, 1, (3, 3))
        if det_range[0] <= np.linalg.det(F) <= det_range[1]:
            return F
