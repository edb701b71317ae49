"""
Сеточное представление вероятностных мер
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import norm

from config.settings import (
    ZERO_MASS, MASS_LEAKAGE_LIMIT, BOUNDARY_BAND_CELLS
)
from utils.exceptions import ZeroMass, MassLeakage, GridMismatch

logger = logging.getLogger(__name__)

MIN_CELLS = 8


def _as_tuple(value, dim, name, cast=float):
    """Приводит скаляр или последовательность к кортежу длины dim"""
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(dim))
    items = tuple(cast(v) for v in value)
    if len(items) != dim:
        raise ValueError(f"{name}: ожидалось {dim} значений, получено {len(items)}")
    return items


def as_points(x, dim: int) -> np.ndarray:
    """Приводит точку или набор точек к массиву формы (n, dim)"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.shape[1] != dim:
        raise ValueError(f"Ожидались точки размерности {dim}, получено {arr.shape[1]}")
    return arr


def point_array(x) -> np.ndarray:
    """Массив точек (n, dim); одномерный массив трактуется как n точек прямой"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    return arr


@dataclass(frozen=True)
class GridSpec:
    """
    Прямоугольная сетка, усекающая R^d до параллелепипеда

    Значения плотности относятся к центрам ячеек (правило средней точки),
    поэтому масса равна сумме значений, умноженной на объем ячейки.
    """
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    cells: Tuple[int, ...]

    def __post_init__(self):
        dim = len(self.lower)
        if dim not in (1, 2):
            raise ValueError(f"Поддерживаются только размерности 1 и 2, получено {dim}")
        if len(self.upper) != dim or len(self.cells) != dim:
            raise ValueError("Границы и число ячеек должны иметь одинаковую размерность")
        for lo, hi, n in zip(self.lower, self.upper, self.cells):
            if not hi > lo:
                raise ValueError(f"Верхняя граница {hi} должна превышать нижнюю {lo}")
            if n < MIN_CELLS:
                raise ValueError(f"Нужно не меньше {MIN_CELLS} ячеек по оси, получено {n}")

    @classmethod
    def create(cls, lower, upper, cells, dim=None):
        """
        Создание сетки из скаляров или последовательностей

        Args:
            lower: Нижние границы по осям
            upper: Верхние границы по осям
            cells: Число ячеек по осям
            dim (int, optional): Размерность, если все аргументы скалярные

        Returns:
            GridSpec: Сетка
        """
        if dim is None:
            for value in (lower, upper, cells):
                if not np.isscalar(value):
                    dim = len(value)
                    break
            else:
                dim = 1
        return cls(
            lower=_as_tuple(lower, dim, "lower"),
            upper=_as_tuple(upper, dim, "upper"),
            cells=_as_tuple(cells, dim, "cells", cast=int),
        )

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def widths(self) -> np.ndarray:
        return np.array([(hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.widths[axis]
        return self.lower[axis] + (np.arange(self.cells[axis]) + 0.5) * h

    def axis_edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.cells[axis] + 1)

    def mesh(self):
        """Координатные массивы формы shape (индексация 'ij')"""
        axes = [self.axis_centers(k) for k in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    @property
    def centers(self) -> np.ndarray:
        """Центры ячеек в виде массива (size, dim) в порядке C"""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.ones(points.shape[0], dtype=bool)
        for k in range(self.dim):
            inside &= (points[:, k] >= self.lower[k]) & (points[:, k] <= self.upper[k])
        return inside

    def describe(self) -> str:
        parts = []
        for k, name in zip(range(self.dim), ("x", "y")):
            parts.append(f"{name} in [{self.lower[k]!r}, {self.upper[k]!r}] cells {self.cells[k]}")
        return "; ".join(parts)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "cells": list(self.cells)}


@dataclass
class DensityField:
    """Плотность вероятности, табулированная в центрах ячеек сетки"""
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("Плотность должна быть конечной во всех ячейках")
        if np.any(values < 0):
            raise ValueError(f"Плотность должна быть неотрицательной (минимум {values.min():.3e})")
        self.values = values

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def cell_masses(self) -> np.ndarray:
        """Массы ячеек (веса квадратуры) в порядке C"""
        return self.flat * self.grid.cell_volume

    def with_values(self, values) -> "DensityField":
        return DensityField(self.grid, np.asarray(values, dtype=float).reshape(self.grid.shape))

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.values.copy())


def require_same_grid(*fields: DensityField) -> GridSpec:
    """Проверяет, что все плотности заданы на одной сетке"""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatch(f"Сетки не совпадают: {grid.describe()} и {other.grid.describe()}")
    return grid


def normalize(density: DensityField) -> DensityField:
    """
    Нормировка плотности на единичную массу

    Args:
        density (DensityField): Неотрицательная плотность положительной массы

    Returns:
        DensityField: Плотность с массой 1
    """
    mass = density.mass
    if not mass >= ZERO_MASS:
        raise ZeroMass(f"Масса {mass:.3e} слишком мала для нормировки")
    if mass == 1.0:
        return density.copy()
    return density.with_values(density.values / mass)


def _gaussian_leakage(grid: GridSpec, mean, std) -> float:
    """Аналитическая масса гауссовского закона вне области"""
    inside = 1.0
    for k in range(grid.dim):
        inside *= (norm.cdf(grid.upper[k], loc=mean[k], scale=std[k])
                   - norm.cdf(grid.lower[k], loc=mean[k], scale=std[k]))
    return max(0.0, 1.0 - inside)


def _check_gaussian(grid: GridSpec, mean, variance):
    mean = np.array(_as_tuple(mean, grid.dim, "mean"))
    variance = np.array(_as_tuple(variance, grid.dim, "variance"))
    if np.any(variance <= 0):
        raise ValueError("Дисперсии должны быть положительными")
    for k in range(grid.dim):
        if not grid.lower[k] < mean[k] < grid.upper[k]:
            raise ValueError(f"Среднее {mean[k]} вне области по оси {k}")
    std = np.sqrt(variance)
    leakage = _gaussian_leakage(grid, mean, std)
    if leakage > MASS_LEAKAGE_LIMIT:
        raise MassLeakage(
            f"Вне области {leakage:.3e} аналитической массы (среднее {mean.tolist()}, "
            f"дисперсия {variance.tolist()}, сетка {grid.describe()})"
        )
    return mean, std


def make_gaussian(grid: GridSpec, mean, variance) -> DensityField:
    """
    Табуляция гауссовской плотности (произведение одномерных) в центрах ячеек

    Args:
        grid (GridSpec): Сетка
        mean: Среднее (скаляр или вектор)
        variance: Дисперсии по осям (скаляр или вектор)

    Returns:
        DensityField: Нормированная плотность
    """
    mean, std = _check_gaussian(grid, mean, variance)
    values = np.ones(grid.shape)
    for k, coords in enumerate(grid.mesh()):
        values = values * norm.pdf(coords, loc=mean[k], scale=std[k])
    return normalize(DensityField(grid, values))


def make_mixture(grid: GridSpec, weights: Sequence[float], means, variances) -> DensityField:
    """Смесь гауссовских плотностей с заданными весами"""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("Веса смеси должны быть неотрицательными и не все нулевыми")
    weights = weights / weights.sum()
    values = np.zeros(grid.shape)
    for w, m, v in zip(weights, means, variances):
        values += w * make_gaussian(grid, m, v).values
    return normalize(DensityField(grid, values))


def make_uniform(grid: GridSpec, lower, upper) -> DensityField:
    """Равномерный закон на параллелепипеде [lower, upper] (по центрам ячеек)"""
    lower = _as_tuple(lower, grid.dim, "lower")
    upper = _as_tuple(upper, grid.dim, "upper")
    values = np.ones(grid.shape)
    for k, coords in enumerate(grid.mesh()):
        values = values * ((coords >= lower[k]) & (coords <= upper[k]))
    return normalize(DensityField(grid, values))


def cell_average_gaussian(grid: GridSpec, mean, variance) -> DensityField:
    """
    Точные средние гауссовской плотности по ячейкам

    Используется как эталон при измерении порядка сходимости по пространству.
    """
    mean, std = _check_gaussian(grid, mean, variance)
    values = np.ones(grid.shape)
    for k in range(grid.dim):
        edges = grid.axis_edges(k)
        averages = np.diff(norm.cdf(edges, loc=mean[k], scale=std[k])) / grid.widths[k]
        shape = [1] * grid.dim
        shape[k] = grid.cells[k]
        values = values * averages.reshape(shape)
    return normalize(DensityField(grid, values))


def from_function(grid: GridSpec, func) -> DensityField:
    """Табуляция неотрицательной функции f(points) с нормировкой"""
    values = np.asarray(func(grid.centers), dtype=float).reshape(grid.shape)
    return normalize(DensityField(grid, values))


def boundary_band_mass(density: DensityField, cells: int = BOUNDARY_BAND_CELLS) -> float:
    """Масса в полосе ширины cells ячеек у границы области"""
    mask = np.zeros(density.grid.shape, dtype=bool)
    for k in range(density.grid.dim):
        n = density.grid.cells[k]
        band = min(cells, n)
        index = [slice(None)] * density.grid.dim
        index[k] = slice(0, band)
        mask[tuple(index)] = True
        index[k] = slice(n - band, n)
        mask[tuple(index)] = True
    return float(np.sum(density.values[mask]) * density.grid.cell_volume)


def mean_vector(density: DensityField) -> np.ndarray:
    """Вектор средних"""
    weights = density.cell_masses
    return weights @ density.grid.centers


def covariance(density: DensityField) -> np.ndarray:
    """Ковариационная матрица"""
    weights = density.cell_masses
    centered = density.grid.centers - mean_vector(density)
    return (centered * weights[:, None]).T @ centered
