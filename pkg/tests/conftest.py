import numpy as np
import pytest
from hypothesis import settings

from bosonldp import ComplexField, GridSpec, Observable, Potential, evolve_hartree, gaussian

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def mixture_state(grid):
    """Four-mode superposition used by the reference config."""
    x = grid.coords[0]
    vals = (1.0 + (0.5 + 0.2j) * np.exp(1j * x) + 0.3 * np.exp(-1j * x)
            + 0.15j * np.exp(2j * x))
    return ComplexField(grid, vals).normalized()


def random_field(grid, rng):
    return ComplexField(grid, rng.normal(size=grid.n_points) + 1j * rng.normal(size=grid.n_points))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(1, 6, 2 * np.pi)


@pytest.fixture(scope="session")
def big_grid():
    return GridSpec(1, 256, 20.0)


@pytest.fixture(scope="session")
def weak_v():
    return Potential("gaussian", 0.25, 1.0)


@pytest.fixture(scope="session")
def ref_phi(small_grid):
    return mixture_state(small_grid)


@pytest.fixture(scope="session")
def cos_obs(small_grid):
    return Observable.cosine(small_grid, 1.0, 1)


@pytest.fixture(scope="session")
def ref_traj(ref_phi, weak_v):
    return evolve_hartree(ref_phi, weak_v, 1.0, 1e-3)


@pytest.fixture(scope="session")
def packet(big_grid):
    return gaussian(big_grid, width=1.0, momentum=[1.0])
