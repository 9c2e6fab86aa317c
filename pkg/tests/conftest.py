import math

import pytest

from graphheat.acceptance import a2_tadpole, star_operator, tadpole_operator, uneven_star
from graphheat.metric_graph import star_graph


@pytest.fixture(scope="session")
def uneven():
    return uneven_star()


@pytest.fixture(scope="session")
def tadpole():
    return a2_tadpole()


@pytest.fixture(scope="session")
def equal_star():
    return star_graph([1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def cos_op():
    return star_operator()


@pytest.fixture(scope="session")
def lin_op():
    return tadpole_operator()


@pytest.fixture
def pi2():
    return math.pi**2
