import numpy as np
import pytest

from measures.grid import (
    GridSpec, DensityField, normalize, make_gaussian, make_mixture, make_uniform,
    cell_average_gaussian, from_function, boundary_band_mass, mean_vector, covariance, require_same_grid
)
from utils.exceptions import ZeroMass, MassLeakage, GridMismatch


def test_grid_geometry(grid_1d):
    assert grid_1d.dim == 1
    assert grid_1d.shape == (128,)
    assert grid_1d.cell_volume == pytest.approx(0.125)
    assert grid_1d.axis_centers(0)[0] == pytest.approx(-8.0 + 0.0625)
    assert grid_1d.axis_edges(0).size == 129
    assert grid_1d.centers.shape == (128, 1)


def test_grid_2d_centers_c_order(grid_2d):
    """Первая ось внешняя: соседние строки отличаются по y"""
    centers = grid_2d.centers
    assert centers.shape == (48 * 48, 2)
    assert centers[0, 0] == centers[1, 0]
    assert centers[1, 1] > centers[0, 1]


@pytest.mark.parametrize("lower, upper, cells", [
    (0.0, 1.0, 4),
    (1.0, 0.0, 16),
    ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [8, 8, 8]),
])
def test_grid_rejects_invalid_boxes(lower, upper, cells):
    with pytest.raises(ValueError):
        GridSpec.create(lower, upper, cells)


def test_density_rejects_negative_and_nonfinite(grid_1d):
    values = np.ones(128)
    values[3] = -1e-3
    with pytest.raises(ValueError):
        DensityField(grid_1d, values)
    values[3] = np.nan
    with pytest.raises(ValueError):
        DensityField(grid_1d, values)


def test_normalize_zero_mass(grid_1d):
    with pytest.raises(ZeroMass):
        normalize(DensityField(grid_1d, np.zeros(128)))


def test_gaussian_moments(grid_1d):
    density = make_gaussian(grid_1d, 1.0, 0.5)
    assert density.mass == pytest.approx(1.0, abs=1e-12)
    assert mean_vector(density)[0] == pytest.approx(1.0, abs=1e-6)
    assert covariance(density)[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_gaussian_2d_covariance(grid_2d):
    density = make_gaussian(grid_2d, [0.5, -0.5], [1.0, 0.5])
    cov = covariance(density)
    assert np.allclose(np.diag(cov), [1.0, 0.5], atol=1e-5)
    assert abs(cov[0, 1]) < 1e-8


def test_gaussian_leakage_and_outside_mean(grid_1d):
    with pytest.raises(MassLeakage):
        make_gaussian(grid_1d, 7.0, 1.0)
    with pytest.raises(ValueError):
        make_gaussian(grid_1d, 9.0, 0.1)


def test_mixture_and_uniform(grid_1d):
    mixture = make_mixture(grid_1d, [1.0, 3.0], [-2.0, 2.0], [0.5, 0.5])
    assert mean_vector(mixture)[0] == pytest.approx(0.25 * -2.0 + 0.75 * 2.0, abs=1e-6)
    uniform = make_uniform(grid_1d, -8.0, 8.0)
    assert np.allclose(uniform.values, 1.0 / 16.0)
    assert boundary_band_mass(uniform, 10) == pytest.approx(20.0 / 128.0)


def test_cell_average_matches_point_values(grid_1d):
    points = make_gaussian(grid_1d, 0.0, 1.0)
    averages = cell_average_gaussian(grid_1d, 0.0, 1.0)
    # Разница порядка h^2 / 24 * rho''
    assert np.max(np.abs(points.values - averages.values)) < 1e-3


def test_from_function_normalizes(grid_1d):
    density = from_function(grid_1d, lambda x: np.exp(-np.abs(x[:, 0])))
    assert density.mass == pytest.approx(1.0)


def test_require_same_grid(grid_1d, standard_gaussian):
    other = make_gaussian(GridSpec.create(-8.0, 8.0, 64), 0.0, 1.0)
    assert require_same_grid(standard_gaussian, standard_gaussian) == grid_1d
    with pytest.raises(GridMismatch):
        require_same_grid(standard_gaussian, other)
