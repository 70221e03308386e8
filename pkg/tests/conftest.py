import numpy as np
import pytest

from scfred.scspace import Domain, make_scale_space


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line_space():
    return make_scale_space(Domain.line(6.0, 0.1), 1, (0.0, 0.5, 1.0))


@pytest.fixture
def small_line_space():
    return make_scale_space(Domain.line(4.0, 0.25), 1, (0.0, 0.5))


@pytest.fixture
def cylinder_space():
    return make_scale_space(Domain.cylinder(12.0, 0.1), 1, (0.0, 0.5))
