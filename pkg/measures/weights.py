"""
Весовые функции Ляпунова и постоянная диагональная диффузия
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from measures.grid import as_points, point_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightFunction:
    """
    Пара V(x) = (1+|x|^2)^m и W = V^gamma

    Args:
        m (float): Порядок момента (>= 1/2)
        gamma (float): Показатель веса из (0, 1/2]
    """
    m: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.m < 0.5:
            raise ValueError(f"Порядок момента m={self.m} должен быть не меньше 1/2")
        if not 0 < self.gamma <= 0.5:
            raise ValueError(f"Показатель gamma={self.gamma} должен лежать в (0, 1/2]")

    @classmethod
    def dissipative_pair(cls, m: float) -> "WeightFunction":
        """Пара V=(1+|x|^2)^(m+1/2), W=(1+|x|^2)^(m/2) для диссипативного сноса"""
        return cls(m=m + 0.5, gamma=(m / 2.0) / (m + 0.5))

    @staticmethod
    def _base(points: np.ndarray) -> np.ndarray:
        return 1.0 + np.sum(points ** 2, axis=1)

    def V(self, x) -> np.ndarray:
        return self._base(point_array(x)) ** self.m

    def W(self, x) -> np.ndarray:
        return self.V(x) ** self.gamma

    def power(self, exponent: float, x) -> np.ndarray:
        """V(x)^exponent"""
        return self.V(x) ** exponent

    def gradient_V(self, x) -> np.ndarray:
        points = point_array(x)
        factor = 2.0 * self.m * self._base(points) ** (self.m - 1.0)
        return factor[:, None] * points

    def laplacian_terms(self, points: np.ndarray) -> np.ndarray:
        """Диагональ гессиана V: d_ii V, форма (n, dim)"""
        s = self._base(points)
        first = 2.0 * self.m * s ** (self.m - 1.0)
        second = 4.0 * self.m * (self.m - 1.0) * s ** (self.m - 2.0)
        return first[:, None] + second[:, None] * points ** 2

    def generator_V(self, x, drift: np.ndarray, diffusion: "DiffusionSpec") -> np.ndarray:
        """
        L V = sum_i a^ii d_ii V + <b, grad V> с точными производными

        Args:
            x: Точки (n, dim)
            drift (np.ndarray): Снос в этих точках (n, dim)
            diffusion (DiffusionSpec): Диффузия

        Returns:
            np.ndarray: Значения L V
        """
        points = as_points(x, diffusion.dim)
        drift = np.asarray(drift, dtype=float).reshape(points.shape)
        second_order = self.laplacian_terms(points) @ np.asarray(diffusion.diagonal)
        return second_order + np.sum(drift * self.gradient_V(points), axis=1)

    def to_dict(self):
        return {"m": self.m, "gamma": self.gamma}


@dataclass(frozen=True)
class DiffusionSpec:
    """Постоянная диагональная матрица диффузии A = diag(a^ii)"""
    diagonal: Tuple[float, ...]

    def __post_init__(self):
        if len(self.diagonal) not in (1, 2):
            raise ValueError("Диффузия задается для размерности 1 или 2")
        if any(a <= 0 for a in self.diagonal):
            raise ValueError(f"Коэффициенты диффузии должны быть положительны: {self.diagonal}")

    @classmethod
    def create(cls, value, dim: int) -> "DiffusionSpec":
        if np.isscalar(value):
            return cls(tuple(float(value) for _ in range(dim)))
        diagonal = tuple(float(v) for v in value)
        if len(diagonal) != dim:
            raise ValueError(f"Ожидалось {dim} коэффициентов диффузии, получено {len(diagonal)}")
        return cls(diagonal)

    @property
    def dim(self) -> int:
        return len(self.diagonal)

    @property
    def K1(self) -> float:
        """Наименьшая K1 с K1^-1 <= a^ii <= K1"""
        return float(max(max(self.diagonal), 1.0 / min(self.diagonal)))

    @property
    def K2(self) -> float:
        # Постоянная матрица: липшицева константа нулевая
        return 0.0

    @property
    def a_max(self) -> float:
        return float(max(self.diagonal))

    @property
    def is_identity(self) -> bool:
        return all(a == 1.0 for a in self.diagonal)

    def to_dict(self):
        return {"diagonal": list(self.diagonal)}
