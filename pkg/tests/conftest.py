import numpy as np
import pytest

from invmaxent.builder import make_pools
from invmaxent.group import build_action, microimage_group, microimage_space
from invmaxent.invariants import microimage_generators


@pytest.fixture(scope="session")
def group():
    return microimage_group()


@pytest.fixture(scope="session")
def gens():
    return microimage_generators()


@pytest.fixture(scope="session")
def space4():
    return microimage_space(4)


@pytest.fixture(scope="session")
def action4(group, space4):
    return build_action(group, space4)


@pytest.fixture(scope="session")
def inv_pools(gens, space4):
    return make_pools("invariant", gens, space4)


@pytest.fixture(scope="session")
def ord_pools(gens, space4):
    return make_pools("ordinary", gens, space4)


def random_simplex(rng, K, floor=0.0):
    p = rng.dirichlet(np.ones(K)) + floor
    return p / p.sum()
