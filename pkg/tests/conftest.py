import pytest

from measures.grid import GridSpec, make_gaussian
from measures.weights import WeightFunction, DiffusionSpec


@pytest.fixture
def grid_1d():
    return GridSpec.create(-8.0, 8.0, 128)


@pytest.fixture
def grid_2d():
    return GridSpec.create([-6.0, -6.0], [6.0, 6.0], [48, 48])


@pytest.fixture
def unit_diffusion():
    return DiffusionSpec.create(1.0, 1)


@pytest.fixture
def weight():
    return WeightFunction()


@pytest.fixture
def standard_gaussian(grid_1d):
    return make_gaussian(grid_1d, 0.0, 1.0)


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return str(path)
