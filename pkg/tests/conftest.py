import numpy as np
import pytest

from hsprobe import acoustic as ac
from hsprobe import elastic as el
from hsprobe.geometry import ShapeSpec
from hsprobe.grid import GridSpec


@pytest.fixture(scope="session")
def ball():
    return ShapeSpec.ball(0.8)


@pytest.fixture(scope="session")
def grid16():
    # the box must clear the ball by two cells
    return GridSpec.cube(16, half_width=1.25)


@pytest.fixture(scope="session")
def grid32():
    return GridSpec.cube(32)


@pytest.fixture(scope="session")
def medium15(ball):
    return ac.AcousticMedium(1.0, ball, 1.5)


@pytest.fixture(scope="session")
def emedium15(ball):
    return el.ElasticMedium(1.0, 1.0, 1.0, ball, 1.5)


@pytest.fixture(scope="session")
def plane_solution32(medium15, grid32):
    return ac.solve_total_field(medium15, ac.plane_wave(1.0, (0.0, 0.0, 1.0), grid32))


@pytest.fixture(scope="session")
def elastic_solution16(emedium15, grid16):
    inc = el.elastic_plane_wave(emedium15, (0.0, 0.0, 1.0), (1.0, 0.0, 0.0), grid16)
    return el.solve_total_field_elastic(emedium15, inc)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
