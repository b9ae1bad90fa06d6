import numpy as np
import pytest

from curveforge.torus import TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line64():
    return TorusGrid(1, 64)
