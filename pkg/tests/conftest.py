import numpy as np
import pytest

from dytb.lattice import Grid
from dytb.measure import AtomicMeasure, Canvas


@pytest.fixture
def canvas6():
    return Canvas(1, 6)


@pytest.fixture
def lebesgue6(canvas6):
    return AtomicMeasure.lebesgue(canvas6)


@pytest.fixture
def unit_grid6(canvas6):
    return Grid(dim=1, top_exp=6, depth=6, shift=(0,))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
