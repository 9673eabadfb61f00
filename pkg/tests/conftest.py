import numpy as np
import pytest

from tnprep.experiments import g_family_tensors
from tnprep.graphs import build_lattice_graph
from tnprep.tensors import random_injective_spec, random_near_isometry_spec


@pytest.fixture(scope="session")
def ring3():
    return build_lattice_graph("ring", (3,))


@pytest.fixture(scope="session")
def path3():
    return build_lattice_graph("path", (3,))


@pytest.fixture(scope="session")
def path4():
    return build_lattice_graph("path", (4,))


@pytest.fixture(scope="session")
def spec_ring3(ring3):
    """Complex near-isometry on the triangle; delta small enough that every
    bound in the suite is comfortably inside its validity region."""
    return random_near_isometry_spec(ring3, 2, 0.05, seed=11)


@pytest.fixture(scope="session")
def spec_ring3_real(ring3):
    return random_near_isometry_spec(ring3, 2, 0.05, seed=5, real=True)


@pytest.fixture(scope="session")
def spec_path3(path3):
    """Small real spec (total dimension 16): cheap enough for dense
    superoperator cross-checks inside unit tests."""
    return random_near_isometry_spec(path3, 2, 0.05, seed=5, real=True)


@pytest.fixture(scope="session")
def spec_path3_inj(path3):
    return random_injective_spec(path3, 2, seed=1)


@pytest.fixture(scope="session")
def gchain03():
    return g_family_tensors(0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
