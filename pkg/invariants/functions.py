"""
Пробные функции psi с производными в замкнутой форме и пространство ограничений
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, root

from config.settings import CONSTRAINT_TOLERANCE
from measures.grid import DensityField, point_array
from utils.exceptions import NonSmoothPsi, NoConvergence

logger = logging.getLogger(__name__)


class TestFunction:
    """Гладкая функция psi: значения, градиент и гессиан"""

    __test__ = False  # не путать pytest
    kind = "function"
    has_derivatives = True

    def __init__(self, dim: int, name: Optional[str] = None):
        self.dim = dim
        self.name = name or self.kind

    def value(self, points) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, points) -> np.ndarray:
        raise NonSmoothPsi(f"У функции '{self.name}' нет градиента в замкнутой форме")

    def hessian(self, points) -> np.ndarray:
        raise NonSmoothPsi(f"У функции '{self.name}' нет гессиана в замкнутой форме")

    def laplacian(self, points) -> np.ndarray:
        return np.trace(self.hessian(points), axis1=1, axis2=2)

    def hessian_diagonal(self, points) -> np.ndarray:
        return np.diagonal(self.hessian(points), axis1=1, axis2=2)

    def __call__(self, points) -> np.ndarray:
        return self.value(points)

    def to_dict(self) -> Dict:
        return {"kind": self.kind}

    def __repr__(self):
        return f"{type(self).__name__}({self.name})"


class Monomial(TestFunction):
    """psi(x) = prod_k x_k^p_k"""

    kind = "monomial"

    def __init__(self, powers: Sequence[int], name: Optional[str] = None):
        powers = [int(p) for p in np.atleast_1d(powers)]
        if any(p < 0 for p in powers):
            raise ValueError("Степени одночлена должны быть неотрицательными")
        default = "*".join(f"x{k + 1}^{p}" for k, p in enumerate(powers) if p) or "1"
        super().__init__(len(powers), name or default)
        self.powers = np.array(powers)

    @staticmethod
    def _power(x, p):
        return x ** p if p >= 0 else np.zeros_like(x)

    def _factors(self, points, shifts):
        result = np.ones(points.shape[0])
        for k in range(self.dim):
            p = self.powers[k] - shifts[k]
            coef = 1.0
            for j in range(shifts[k]):
                coef *= self.powers[k] - j
            result = result * coef * self._power(points[:, k], p)
        return result

    def value(self, points) -> np.ndarray:
        return self._factors(point_array(points), [0] * self.dim)

    def gradient(self, points) -> np.ndarray:
        points = point_array(points)
        columns = []
        for k in range(self.dim):
            shifts = [0] * self.dim
            shifts[k] = 1
            columns.append(self._factors(points, shifts))
        return np.stack(columns, axis=1)

    def hessian(self, points) -> np.ndarray:
        points = point_array(points)
        result = np.empty((points.shape[0], self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                shifts = [0] * self.dim
                shifts[i] += 1
                shifts[j] += 1
                result[:, i, j] = self._factors(points, shifts)
        return result

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "powers": self.powers.tolist()}


class LinearForm(TestFunction):
    """psi(x) = <v, x> + offset"""

    kind = "linear-form"

    def __init__(self, v, offset: float = 0.0, name: Optional[str] = None):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        super().__init__(v.size, name or f"<{v.tolist()}, x>")
        self.v = v
        self.offset = float(offset)

    def value(self, points) -> np.ndarray:
        return point_array(points) @ self.v + self.offset

    def gradient(self, points) -> np.ndarray:
        return np.tile(self.v, (point_array(points).shape[0], 1))

    def hessian(self, points) -> np.ndarray:
        return np.zeros((point_array(points).shape[0], self.dim, self.dim))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "v": self.v.tolist(), "offset": self.offset}


class Exponential(TestFunction):
    """psi(x) = scale * exp(<w, x>)"""

    kind = "exponential"

    def __init__(self, w, scale: float = 1.0, name: Optional[str] = None):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        super().__init__(w.size, name or f"exp(<{w.tolist()}, x>)")
        self.w = w
        self.scale = float(scale)

    def value(self, points) -> np.ndarray:
        return self.scale * np.exp(point_array(points) @ self.w)

    def gradient(self, points) -> np.ndarray:
        return self.value(points)[:, None] * self.w

    def hessian(self, points) -> np.ndarray:
        return self.value(points)[:, None, None] * np.outer(self.w, self.w)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "w": self.w.tolist(), "scale": self.scale}


class Constant(TestFunction):
    kind = "constant"

    def __init__(self, c: float = 1.0, dim: int = 1, name: Optional[str] = None):
        super().__init__(dim, name or f"const {c}")
        self.c = float(c)

    def value(self, points) -> np.ndarray:
        return np.full(point_array(points).shape[0], self.c)

    def gradient(self, points) -> np.ndarray:
        return np.zeros((point_array(points).shape[0], self.dim))

    def hessian(self, points) -> np.ndarray:
        return np.zeros((point_array(points).shape[0], self.dim, self.dim))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "c": self.c}


class SampledFunction(TestFunction):
    """Функция без производных: годится для интегрирования, не для классификации"""

    kind = "sampled"
    has_derivatives = False

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "sampled"):
        super().__init__(dim, name)
        self.func = func

    def value(self, points) -> np.ndarray:
        return np.asarray(self.func(point_array(points)), dtype=float)


def coordinate(k: int, dim: int) -> LinearForm:
    """psi(x) = x_k"""
    v = np.zeros(dim)
    v[k] = 1.0
    return LinearForm(v, name=["x", "y"][k] if dim > 1 else "x")


def function_from_dict(data: Dict, dim: int) -> TestFunction:
    """Пробная функция по имени из каталога"""
    kind = data.get("kind")
    name = data.get("name")
    if kind == "monomial":
        powers = data.get("powers", 1)
        if np.isscalar(powers):
            powers = [powers] + [0] * (dim - 1)
        return Monomial(powers, name=name)
    if kind == "linear-form":
        return LinearForm(data["v"], data.get("offset", 0.0), name=name)
    if kind == "exponential":
        return Exponential(data["w"], data.get("scale", 1.0), name=name)
    if kind == "constant":
        return Constant(data.get("c", 1.0), dim=dim, name=name)
    raise ValueError(f"Неизвестная пробная функция: {kind}")


@dataclass
class ConstraintFunction:
    """
    Элемент пространства ограничений: L_sigma psi = C1(sigma) h + C2(sigma)
    """
    name: str
    psi: TestFunction
    h: TestFunction
    C1: Callable[[DensityField], float]
    C2: Callable[[DensityField], float]


@dataclass
class FunctionalSpace:
    """Базис сохраняющихся функционалов модели"""
    entries: List[ConstraintFunction] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def functions(self) -> List[TestFunction]:
        return [entry.h for entry in self.entries]

    def values(self, density: DensityField) -> np.ndarray:
        return constraint_values(density, self.functions())


def constraint_values(density: DensityField, functions: Sequence[TestFunction]) -> np.ndarray:
    """Значения mu(h) для набора функций"""
    weights = density.cell_masses
    centers = density.grid.centers
    return np.array([float(np.dot(h.value(centers), weights)) for h in functions])


def _tilted(base: np.ndarray, table: np.ndarray, c: np.ndarray) -> np.ndarray:
    exponent = table @ c
    exponent -= exponent.max()
    tilted = base * np.exp(exponent)
    return tilted / tilted.sum()


def project_constraints(density: DensityField, functions: Sequence[TestFunction], targets,
                        tol: float = CONSTRAINT_TOLERANCE * 1e-2) -> DensityField:
    """
    Экспоненциальный наклон rho * exp(<c, h>), восстанавливающий mu(h) = Q

    Args:
        density (DensityField): Плотность
        functions: Функции h
        targets: Требуемые значения Q
        tol (float): Допуск по каждому ограничению

    Returns:
        DensityField: Нормированная плотность с заданными значениями ограничений
    """
    functions = list(functions)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if not functions:
        return density.copy()
    if len(targets) != len(functions):
        raise ValueError(f"Число ограничений {len(functions)} не совпадает с числом значений {len(targets)}")

    current = constraint_values(density, functions)
    if np.all(np.abs(current - targets) <= tol):
        return density.copy()

    grid = density.grid
    masses = density.cell_masses
    table = np.column_stack([h.value(grid.centers) for h in functions])
    support = masses > 0
    base = masses[support]
    table = table[support]

    def gap(c):
        weights = _tilted(base, table, np.atleast_1d(c))
        return weights @ table - targets

    if len(functions) == 1:
        # E_c[h] монотонно возрастает по c
        lo, hi = -1.0, 1.0
        for _ in range(60):
            if gap(lo)[0] < 0 < gap(hi)[0]:
                break
            if gap(lo)[0] >= 0:
                lo *= 2.0
            if gap(hi)[0] <= 0:
                hi *= 2.0
        else:
            raise NoConvergence(f"Ограничение {functions[0].name} = {targets[0]} недостижимо на сетке")
        c = np.array([brentq(lambda s: gap(s)[0], lo, hi, xtol=1e-15, rtol=4e-16, maxiter=200)])
    else:
        def jacobian(c):
            weights = _tilted(base, table, c)
            mean = weights @ table
            centered = table - mean
            return (centered * weights[:, None]).T @ centered

        solution = root(gap, np.zeros(len(functions)), jac=jacobian, method="hybr", tol=1e-14)
        if not solution.success:
            raise NoConvergence(f"Проекция на ограничения не сошлась: {solution.message}")
        c = solution.x

    values = np.zeros(grid.size)
    values[support] = _tilted(base, table, c) / grid.cell_volume
    projected = density.with_values(values)
    logger.debug(f"Наклон на ограничения: c={c.tolist()}, отклонение "
                 f"{np.max(np.abs(constraint_values(projected, functions) - targets)):.2e}")
    return projected
