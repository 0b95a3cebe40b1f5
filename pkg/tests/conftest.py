import numpy as np
import pytest

from coulomb_lab.equilibrium import solve_equilibrium_direct
from coulomb_lab.grids import Grid
from coulomb_lab.potentials import quadratic


@pytest.fixture(scope="session")
def circle_16():
    return solve_equilibrium_direct(quadratic(2), Grid.box(2, -2, 2, 1 / 16))


@pytest.fixture(scope="session")
def circle_32():
    return solve_equilibrium_direct(quadratic(2), Grid.box(2, -2, 2, 1 / 32))


@pytest.fixture(scope="session")
def semicircle():
    return solve_equilibrium_direct(quadratic(1), Grid.box(1, -2.5, 2.5, 1 / 200))


def disk_points(n, seed, radius=1.0):
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=n))
    th = rng.uniform(0, 2 * np.pi, n)
    return np.c_[r * np.cos(th), r * np.sin(th)]
