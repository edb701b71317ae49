"""
Функционалы и метрики на табулированных плотностях
"""
import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import trapezoid

from measures.grid import DensityField, require_same_grid
from measures.weights import WeightFunction
from utils.exceptions import DimensionUnsupported

logger = logging.getLogger(__name__)

Functional = Union[float, Callable[[np.ndarray], np.ndarray]]


def _tabulate(density: DensityField, phi: Functional) -> np.ndarray:
    if callable(phi):
        values = np.asarray(phi(density.grid.centers), dtype=float)
        return np.broadcast_to(values, (density.grid.size,))
    return np.full(density.grid.size, float(phi))


def integrate_functional(density: DensityField, phi: Functional) -> float:
    """
    Квадратура средней точки для mu(phi) = ∫ phi dmu

    Args:
        density (DensityField): Плотность
        phi: Функция точек (size, dim) -> (size,) или константа

    Returns:
        float: Значение интеграла
    """
    return float(np.dot(_tabulate(density, phi), density.cell_masses))


def moment_V(density: DensityField, weight: WeightFunction) -> float:
    """∫ V dmu"""
    return integrate_functional(density, weight.V)


def weighted_tv(mu: DensityField, sigma: DensityField,
                weight: Optional[WeightFunction] = None) -> float:
    """
    Взвешенная норма полной вариации ||mu - sigma||_W = ∫ W |rho_mu - rho_sigma| dx

    При weight=None используется W = 1.
    """
    grid = require_same_grid(mu, sigma)
    diff = np.abs(mu.flat - sigma.flat)
    if weight is not None:
        diff = diff * weight.W(grid.centers)
    return float(np.sum(diff) * grid.cell_volume)


def cdf_at_edges(density: DensityField) -> np.ndarray:
    """Функция распределения на узлах одномерной сетки (F(lower) = 0)"""
    if density.grid.dim != 1:
        raise DimensionUnsupported("Функция распределения строится только в размерности 1")
    h = density.grid.widths[0]
    return np.concatenate([[0.0], np.cumsum(density.values) * h])


def w1_1d(mu: DensityField, sigma: DensityField) -> float:
    """
    Метрика Канторовича W1 в размерности 1: ∫ |F_mu - F_sigma| dx

    Плотность постоянна в ячейке, поэтому F кусочно-линейна и
    правило трапеций по узлам точно вне ячеек со сменой знака.
    """
    grid = require_same_grid(mu, sigma)
    if grid.dim != 1:
        raise DimensionUnsupported(f"W1 поддерживается только при d=1, получено d={grid.dim}")
    gap = np.abs(cdf_at_edges(mu) - cdf_at_edges(sigma))
    return float(trapezoid(gap, grid.axis_edges(0)))
