import numpy as np
import pytest

from measures.grid import GridSpec, DensityField, make_gaussian, normalize
from measures.weights import WeightFunction, DiffusionSpec
from measures.metrics import integrate_functional, moment_V, weighted_tv, cdf_at_edges, w1_1d
from utils.exceptions import DimensionUnsupported, GridMismatch


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightFunction(m=0.25)
    with pytest.raises(ValueError):
        WeightFunction(m=1.0, gamma=0.75)


def test_weight_values(weight):
    x = np.array([[0.0], [2.0]])
    assert np.allclose(weight.V(x), [1.0, 5.0])
    assert np.allclose(weight.W(x), np.sqrt([1.0, 5.0]))
    assert np.allclose(weight.gradient_V(x)[:, 0], [0.0, 4.0])


def test_dissipative_pair():
    pair = WeightFunction.dissipative_pair(1.0)
    assert pair.m == pytest.approx(1.5)
    assert pair.gamma == pytest.approx(1.0 / 3.0)


def test_generator_of_quadratic_weight(weight, unit_diffusion):
    """Для V = 1 + x^2 и b = -x: L V = 2 - 2 x^2"""
    x = np.linspace(-3, 3, 7)[:, None]
    LV = weight.generator_V(x, -x, unit_diffusion)
    assert np.allclose(LV, 2.0 - 2.0 * x[:, 0] ** 2)


def test_diffusion_spec():
    diffusion = DiffusionSpec.create(2.0, 2)
    assert diffusion.diagonal == (2.0, 2.0)
    assert DiffusionSpec.create([0.5, 2.0], 2).K1 == pytest.approx(2.0)
    assert DiffusionSpec.create(1.0, 1).is_identity
    with pytest.raises(ValueError):
        DiffusionSpec.create([1.0, -1.0], 2)
    with pytest.raises(ValueError):
        DiffusionSpec.create([1.0, 1.0], 1)


def test_integrals(standard_gaussian, weight):
    assert integrate_functional(standard_gaussian, 1.0) == pytest.approx(1.0)
    assert integrate_functional(standard_gaussian, lambda x: x[:, 0] ** 2) == pytest.approx(1.0, abs=1e-6)
    assert moment_V(standard_gaussian, weight) == pytest.approx(2.0, abs=1e-6)


def test_weighted_tv(grid_1d, standard_gaussian, weight):
    shifted = make_gaussian(grid_1d, 1.0, 1.0)
    assert weighted_tv(standard_gaussian, standard_gaussian) == 0.0
    plain = weighted_tv(standard_gaussian, shifted)
    assert 0.0 < plain <= 2.0
    assert weighted_tv(standard_gaussian, shifted, weight) > plain


def test_weighted_tv_is_metric_and_monotone_in_weight(grid_1d):
    rng = np.random.default_rng(21)
    heavy, light = WeightFunction(m=1.0, gamma=0.5), WeightFunction(m=1.0, gamma=0.25)
    for _ in range(20):
        mu, sigma, nu = (normalize(DensityField(grid_1d, rng.random(grid_1d.cells[0]))) for _ in range(3))
        for w in (None, light, heavy):
            assert weighted_tv(mu, sigma, w) == pytest.approx(weighted_tv(sigma, mu, w), abs=1e-15)
            assert weighted_tv(mu, nu, w) <= weighted_tv(mu, sigma, w) + weighted_tv(sigma, nu, w) + 1e-12
        plain = weighted_tv(mu, sigma)
        assert weighted_tv(mu, sigma, light) >= plain
        assert weighted_tv(mu, sigma, heavy) >= weighted_tv(mu, sigma, light)


def test_w1_of_translation(grid_1d, standard_gaussian):
    """Сдвиг на целое число ячеек: W1 равна величине сдвига"""
    shifted = make_gaussian(grid_1d, 1.0, 1.0)
    assert w1_1d(standard_gaussian, shifted) == pytest.approx(1.0, abs=1e-6)
    assert w1_1d(standard_gaussian, standard_gaussian) == 0.0


def test_cdf_edges(standard_gaussian):
    cdf = cdf_at_edges(standard_gaussian)
    assert cdf[0] == 0.0
    assert cdf[-1] == pytest.approx(1.0)
    assert np.all(np.diff(cdf) >= 0)


def test_w1_restrictions(grid_2d, standard_gaussian):
    density = make_gaussian(grid_2d, [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DimensionUnsupported):
        w1_1d(density, density)
    other = make_gaussian(GridSpec.create(-8.0, 8.0, 64), 0.0, 1.0)
    with pytest.raises(GridMismatch):
        w1_1d(standard_gaussian, other)
