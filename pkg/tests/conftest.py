import numpy as np
import pytest

from charfem.fem import FESpace, Field, p1_linearize
from charfem.mesh import generate_structured_unit_square
from charfem.transport import sup_grad_p1


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def mesh_n2():
    return generate_structured_unit_square(2, "right")


@pytest.fixture(scope="session")
def mesh_n4():
    return generate_structured_unit_square(4, "right")


@pytest.fixture(scope="session")
def mesh_n8():
    return generate_structured_unit_square(8, "right")


@pytest.fixture(scope="session")
def mesh_n4_cc():
    return generate_structured_unit_square(4, "crisscross")


@pytest.fixture(scope="session")
def space_th_n4(mesh_n4):
    return FESpace(mesh_n4, "TaylorHood_P2P1")


@pytest.fixture(scope="session")
def space_th_n8(mesh_n8):
    return FESpace(mesh_n8, "TaylorHood_P2P1")


@pytest.fixture(scope="session")
def space_mini_n4(mesh_n4_cc):
    return FESpace(mesh_n4_cc, "MINI_P1bP1")


def random_admissible_velocity(space, dt, rng, target=0.2, zero_boundary=True):
    """Random velocity field scaled so dt * |grad P1(u)|_inf equals target."""
    c = rng.standard_normal(space.n_velocity)
    if zero_boundary:
        c[space.dirichlet_mask] = 0.0
    u = Field(space, "velocity", c)
    s = sup_grad_p1(p1_linearize(u))
    u.coefs *= target / (dt * s)
    return u
