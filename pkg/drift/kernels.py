"""
Каталог ядер взаимодействия K(x, y) и базовых полей сноса b0(x)

Все ядра умеют две вещи: вычисление на парах точек и усреднение
∫K(x, y) mu(dy) по взвешенному набору узлов (сетка или частицы).
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from measures.grid import point_array

logger = logging.getLogger(__name__)

# Размер блока точек при попарном суммировании
PAIRWISE_CHUNK = 512
# Предел числа пар в одном блоке
PAIRWISE_PAIRS = 1 << 20


def _matrix(value, dim: int) -> np.ndarray:
    if np.isscalar(value):
        return float(value) * np.eye(dim)
    matrix = np.asarray(value, dtype=float)
    if matrix.shape != (dim, dim):
        raise ValueError(f"Ожидалась матрица {dim}x{dim}, получено {matrix.shape}")
    return matrix


def _vector(value, dim: int) -> np.ndarray:
    if np.isscalar(value):
        return np.full(dim, float(value))
    vector = np.asarray(value, dtype=float).ravel()
    if vector.shape != (dim,):
        raise ValueError(f"Ожидался вектор длины {dim}, получено {vector.shape}")
    return vector


class BaseField:
    """Замкнутое векторное поле b0(x)"""

    kind = "field"

    def __init__(self, dim: int):
        self.dim = dim

    def __call__(self, points) -> np.ndarray:
        raise NotImplementedError

    def monotonicity_constant(self) -> float:
        """Наибольшее kappa с <b0(x)-b0(y), x-y> <= -kappa|x-y|^2"""
        raise NotImplementedError

    def lipschitz_constant(self) -> float:
        return float("inf")

    def to_dict(self) -> Dict:
        raise NotImplementedError


class LinearField(BaseField):
    """b0(x) = M x + c"""

    kind = "linear"

    def __init__(self, matrix=-1.0, offset=0.0, dim: int = 1):
        super().__init__(dim)
        self.matrix = _matrix(matrix, dim)
        self.offset = _vector(offset, dim)

    def __call__(self, points) -> np.ndarray:
        points = point_array(points)
        return points @ self.matrix.T + self.offset

    def monotonicity_constant(self) -> float:
        symmetric = 0.5 * (self.matrix + self.matrix.T)
        return float(-np.max(np.linalg.eigvalsh(symmetric)))

    def lipschitz_constant(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


class PolynomialGradientField(BaseField):
    """
    b0 = -grad U для U(x) = sum_k p(x_k), p - четный многочлен

    Args:
        coefficients: Коэффициенты p по возрастанию степени
        dim (int): Размерность
    """

    kind = "gradient"

    def __init__(self, coefficients: Sequence[float], dim: int = 1):
        super().__init__(dim)
        self.coefficients = [float(c) for c in coefficients]
        self.potential_1d = Polynomial(self.coefficients)
        degree = self.potential_1d.degree()
        if degree < 2 or degree % 2 or self.coefficients[degree] <= 0:
            raise ValueError("Потенциал должен быть многочленом четной степени с положительным старшим коэффициентом")
        self.force_1d = -self.potential_1d.deriv()
        self.curvature_1d = self.potential_1d.deriv(2)

    def __call__(self, points) -> np.ndarray:
        points = point_array(points)
        return self.force_1d(points)

    def potential(self, points) -> np.ndarray:
        return np.sum(self.potential_1d(point_array(points)), axis=1)

    def monotonicity_constant(self) -> float:
        # Минимум U'' по прямой: среди корней U''' (или сама константа)
        candidates = [0.0]
        third = self.potential_1d.deriv(3)
        if third.degree() > 0 or third.coef[0] != 0:
            candidates = [r.real for r in third.roots() if abs(r.imag) < 1e-12] or [0.0]
        return float(min(self.curvature_1d(np.array(candidates))))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "coefficients": self.coefficients}


class Kernel:
    """Ядро взаимодействия K(x, y)"""

    kind = "kernel"

    def __init__(self, dim: int):
        self.dim = dim

    def evaluate(self, x, y) -> np.ndarray:
        """K на парах точек (n, dim) x (n, dim) -> (n, dim)"""
        raise NotImplementedError

    def average(self, points, nodes, weights) -> np.ndarray:
        """
        ∫K(x, y) mu(dy) для mu = sum_j weights_j delta(nodes_j)

        Базовая реализация - попарное суммирование блоками.
        """
        points = point_array(points)
        nodes = point_array(nodes)
        weights = np.asarray(weights, dtype=float)
        result = np.empty_like(points)
        chunk = max(1, min(PAIRWISE_CHUNK, PAIRWISE_PAIRS // max(nodes.shape[0], 1)))
        for start in range(0, points.shape[0], chunk):
            block = points[start:start + chunk]
            xs = np.repeat(block, nodes.shape[0], axis=0)
            ys = np.tile(nodes, (block.shape[0], 1))
            values = self.evaluate(xs, ys).reshape(block.shape[0], nodes.shape[0], self.dim)
            result[start:start + chunk] = np.einsum("ijk,j->ik", values, weights)
        return result

    def sup_norm(self) -> float:
        return float("inf")

    def lipschitz_y(self) -> float:
        """Константа Липшица по второму аргументу"""
        return float("inf")

    def to_dict(self) -> Dict:
        raise NotImplementedError


class LinearKernel(Kernel):
    """K(x, y) = P x + Q y + c"""

    kind = "linear"

    def __init__(self, P=0.0, Q=0.0, c=0.0, dim: int = 1):
        super().__init__(dim)
        self.P = _matrix(P, dim)
        self.Q = _matrix(Q, dim)
        self.c = _vector(c, dim)

    def evaluate(self, x, y) -> np.ndarray:
        return point_array(x) @ self.P.T + point_array(y) @ self.Q.T + self.c

    def average(self, points, nodes, weights) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        first_moment = weights @ point_array(nodes)
        return total * (point_array(points) @ self.P.T + self.c) + first_moment @ self.Q.T

    def sup_norm(self) -> float:
        if np.any(self.P) or np.any(self.Q):
            return float("inf")
        return float(np.linalg.norm(self.c))

    def lipschitz_y(self) -> float:
        return float(np.linalg.norm(self.Q, 2))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "P": self.P.tolist(), "Q": self.Q.tolist(), "c": self.c.tolist()}


class OddDifferenceKernel(Kernel):
    """K(x, y)_k = scale * tanh((x_k - y_k) / width), нечетное по x - y"""

    kind = "odd-difference"

    def __init__(self, scale: float = 1.0, width: float = 1.0, dim: int = 1):
        super().__init__(dim)
        if width <= 0:
            raise ValueError("Ширина ядра должна быть положительной")
        self.scale = float(scale)
        self.width = float(width)

    def evaluate(self, x, y) -> np.ndarray:
        return self.scale * np.tanh((point_array(x) - point_array(y)) / self.width)

    def average(self, points, nodes, weights) -> np.ndarray:
        points = point_array(points)
        nodes = point_array(nodes)
        weights = np.asarray(weights, dtype=float)
        result = np.empty_like(points)
        for k in range(self.dim):
            # Компонента k зависит только от маргинала по оси k
            axis_nodes, inverse = np.unique(nodes[:, k], return_inverse=True)
            axis_weights = np.bincount(inverse.ravel(), weights=weights, minlength=axis_nodes.size)
            for start in range(0, points.shape[0], PAIRWISE_CHUNK):
                block = points[start:start + PAIRWISE_CHUNK, k]
                values = np.tanh((block[:, None] - axis_nodes[None, :]) / self.width)
                result[start:start + PAIRWISE_CHUNK, k] = self.scale * (values @ axis_weights)
        return result

    def sup_norm(self) -> float:
        return abs(self.scale) * np.sqrt(self.dim)

    def lipschitz_y(self) -> float:
        return abs(self.scale) / self.width

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "scale": self.scale, "width": self.width}


class BoundedTrigKernel(Kernel):
    """
    H(x, y) = amplitude * sin(<wx, x> - <wy, y> + phase) * u

    Ограниченное поле вдоль фиксированного направления u.
    """

    kind = "bounded-trig"

    def __init__(self, amplitude: float, direction, wx, wy, phase: float = 0.0):
        direction = np.asarray(direction, dtype=float).ravel()
        super().__init__(direction.size)
        self.amplitude = float(amplitude)
        self.direction = direction
        self.wx = _vector(wx, self.dim)
        self.wy = _vector(wy, self.dim)
        self.phase = float(phase)

    def evaluate(self, x, y) -> np.ndarray:
        angle = point_array(x) @ self.wx - point_array(y) @ self.wy + self.phase
        return self.amplitude * np.sin(angle)[:, None] * self.direction

    def average(self, points, nodes, weights) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)
        inner = point_array(nodes) @ self.wy
        cos_moment = weights @ np.cos(inner)
        sin_moment = weights @ np.sin(inner)
        angle = point_array(points) @ self.wx + self.phase
        scalar = np.sin(angle) * cos_moment - np.cos(angle) * sin_moment
        return self.amplitude * scalar[:, None] * self.direction

    def sup_norm(self) -> float:
        return abs(self.amplitude) * float(np.linalg.norm(self.direction))

    def lipschitz_y(self) -> float:
        return self.sup_norm() * float(np.linalg.norm(self.wy))

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind, "amplitude": self.amplitude, "direction": self.direction.tolist(),
            "wx": self.wx.tolist(), "wy": self.wy.tolist(), "phase": self.phase,
        }


class FieldKernel(Kernel):
    """K(x, y) = b0(x): поле, не зависящее от y"""

    kind = "field"

    def __init__(self, field: BaseField):
        super().__init__(field.dim)
        self.field = field

    def evaluate(self, x, y) -> np.ndarray:
        return self.field(x)

    def average(self, points, nodes, weights) -> np.ndarray:
        return float(np.sum(weights)) * self.field(points)

    def lipschitz_y(self) -> float:
        return 0.0

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "field": self.field.to_dict()}


class KernelSum(Kernel):
    """Линейная комбинация ядер sum_i c_i K_i"""

    kind = "sum"

    def __init__(self, terms: List[Tuple[float, Kernel]]):
        terms = [(float(c), k) for c, k in terms if c != 0.0]
        if not terms:
            raise ValueError("Пустая сумма ядер")
        super().__init__(terms[0][1].dim)
        self.terms = terms

    def evaluate(self, x, y) -> np.ndarray:
        return sum(c * k.evaluate(x, y) for c, k in self.terms)

    def average(self, points, nodes, weights) -> np.ndarray:
        return sum(c * k.average(points, nodes, weights) for c, k in self.terms)

    def sup_norm(self) -> float:
        return float(sum(abs(c) * k.sup_norm() for c, k in self.terms))

    def lipschitz_y(self) -> float:
        return float(sum(abs(c) * k.lipschitz_y() for c, k in self.terms))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "terms": [[c, k.to_dict()] for c, k in self.terms]}


def field_from_dict(data: Dict, dim: int) -> BaseField:
    """Базовое поле из блока конфигурации"""
    kind = data.get("kind", "linear")
    if kind == "linear":
        return LinearField(data.get("matrix", -1.0), data.get("offset", 0.0), dim=dim)
    if kind == "gradient":
        return PolynomialGradientField(data["coefficients"], dim=dim)
    raise ValueError(f"Неизвестный тип поля: {kind}")


def kernel_from_dict(data: Dict, dim: int) -> Kernel:
    """Ядро из блока конфигурации"""
    kind = data.get("kind")
    if kind == "linear":
        return LinearKernel(data.get("P", 0.0), data.get("Q", 0.0), data.get("c", 0.0), dim=dim)
    if kind == "odd-difference":
        return OddDifferenceKernel(data.get("scale", 1.0), data.get("width", 1.0), dim=dim)
    if kind == "bounded-trig":
        kernel = BoundedTrigKernel(data["amplitude"], data["direction"], data["wx"], data["wy"],
                                   data.get("phase", 0.0))
        if kernel.dim != dim:
            raise ValueError(f"Размерность ядра {kernel.dim} не совпадает с размерностью задачи {dim}")
        return kernel
    if kind == "field":
        return FieldKernel(field_from_dict(data["field"], dim))
    if kind == "sum":
        return KernelSum([(c, kernel_from_dict(k, dim)) for c, k in data["terms"]])
    raise ValueError(f"Неизвестный тип ядра: {kind}")
