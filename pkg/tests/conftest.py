import numpy as np
import pytest

from rnmlab import Potential, build_kernel, obstacle, solve_droplet
from rnmlab.fieldops import TestFunction, cutoff_field


@pytest.fixture(scope="session")
def ginibre():
    return Potential.ginibre()


@pytest.fixture(scope="session")
def quartic():
    # Q = |z|^2/2 + 0.1 |z|^4/4
    return Potential.radial([(1, 0.5), (2, 0.025)])


@pytest.fixture(scope="session")
def disk(ginibre):
    return solve_droplet(ginibre)


@pytest.fixture(scope="session")
def disk_obstacle(ginibre, disk):
    return obstacle(ginibre, disk)


@pytest.fixture(scope="session")
def kernel8(ginibre):
    return build_kernel(ginibre, 8)


@pytest.fixture(scope="session")
def kernel16(ginibre):
    return build_kernel(ginibre, 16)


@pytest.fixture(scope="session")
def cutoff_abs2():
    expr = ["+", ["*", "x", "x"], ["*", "y", "y"]]
    return cutoff_field(expr, 1.15, 2.5, name="cut_abs2")


@pytest.fixture(scope="session")
def cutoff_re_z():
    return cutoff_field("x", 1.4, 2.6, name="cut_re_z")


def random_points(count, scale=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal(count) + 1j * rng.standard_normal(count))


def ward_fields(a=1.3, b=2.4):
    """Three distinct fields with nontrivial Ward balance on radial ensembles."""
    from rnmlab.fieldops import equivariant_cutoff_field
    return [
        equivariant_cutoff_field([1.0], a, b, name="v_z"),
        equivariant_cutoff_field([0.0, 1.0], a, b, name="v_z_r2"),
        equivariant_cutoff_field([0.5, -0.3, 0.2], a, b, name="v_z_mix"),
    ]
