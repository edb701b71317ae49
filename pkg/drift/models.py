"""
Модели сноса b_eps(x, mu), зависящего от меры
"""
import logging
from typing import Dict, List, Optional

import numpy as np

from measures.grid import DensityField, point_array
from drift.kernels import (
    Kernel, BaseField, LinearKernel, FieldKernel, KernelSum,
    BoundedTrigKernel, PolynomialGradientField, field_from_dict, kernel_from_dict
)
from invariants.functions import (
    TestFunction, LinearForm, ConstraintFunction, FunctionalSpace, coordinate, constraint_values
)

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-10
IDENTITY_SAMPLES = 100


class DriftModel:
    """
    Базовый класс моделей сноса

    Мера передается как набор узлов с весами: для плотности это центры
    ячеек и их массы, для ансамбля частиц - позиции с весами 1/N.
    """

    variant = "DriftModel"

    def __init__(self, dim: int, epsilon: float):
        if dim not in (1, 2):
            raise ValueError(f"Поддерживаются размерности 1 и 2, получено {dim}")
        if epsilon < 0:
            raise ValueError(f"Параметр eps={epsilon} должен быть неотрицательным")
        if epsilon >= 1:
            logger.info(f"{self.variant}: eps={epsilon} вне режима малых eps, сходимость не гарантируется")
        self.dim = dim
        self.epsilon = float(epsilon)

    def base_drift(self, points) -> np.ndarray:
        raise NotImplementedError

    def drift(self, points, nodes, weights) -> np.ndarray:
        """Снос в точках points при мере sum_j weights_j delta(nodes_j)"""
        raise NotImplementedError

    def drift_field(self, density: DensityField) -> np.ndarray:
        """Снос в центрах всех ячеек, форма (size, dim)"""
        centers = density.grid.centers
        return self.drift(centers, centers, density.cell_masses)

    def eval_drift(self, x, density: DensityField) -> np.ndarray:
        point = np.asarray(x, dtype=float).reshape(1, self.dim)
        return self.drift(point, density.grid.centers, density.cell_masses)[0]

    def evaluate_empirical(self, positions) -> np.ndarray:
        """Снос для частиц при эмпирической мере ансамбля"""
        positions = point_array(positions)
        weights = np.full(positions.shape[0], 1.0 / positions.shape[0])
        return self.drift(positions, positions, weights)

    def interaction_kernel(self) -> Kernel:
        """Ядро K с b(x, mu) = -∫K(x, y) mu(dy)"""
        raise NotImplementedError

    def h_functions(self) -> List[TestFunction]:
        """Функции h, значения которых задают ветвь Q"""
        return []

    def constraint_space(self) -> FunctionalSpace:
        """Функционалы, сохраняемые отображением T"""
        return FunctionalSpace()

    def monotonicity_constant(self) -> float:
        raise NotImplementedError

    def w1_lipschitz_constant(self) -> float:
        """Константа C: |b(x, mu) - b(x, sigma)| <= C W1(mu, sigma)"""
        raise NotImplementedError

    def interaction_sup(self) -> float:
        """sup |H| части сноса, не определяемой ограничениями"""
        return 0.0

    def to_dict(self) -> Dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{self.variant}(dim={self.dim}, eps={self.epsilon})"


class MeanFieldLinear(DriftModel):
    """b(x, mu) = -x + shift + eps * ∫ y mu(dy)"""

    variant = "MeanFieldLinear"

    def __init__(self, epsilon: float = 0.5, shift=0.0, dim: int = 1):
        super().__init__(dim, epsilon)
        self.shift = np.full(dim, float(shift)) if np.isscalar(shift) else np.asarray(shift, dtype=float)

    def base_drift(self, points) -> np.ndarray:
        return -point_array(points) + self.shift

    def drift(self, points, nodes, weights) -> np.ndarray:
        mean = np.asarray(weights, dtype=float) @ point_array(nodes)
        return self.base_drift(points) + self.epsilon * mean

    def interaction_kernel(self) -> Kernel:
        return LinearKernel(P=1.0, Q=-self.epsilon, c=-self.shift, dim=self.dim)

    def h_functions(self) -> List[TestFunction]:
        return [coordinate(k, self.dim) for k in range(self.dim)]

    def constraint_space(self) -> FunctionalSpace:
        # Среднее сохраняется только при eps = 1 и нулевом сдвиге
        if self.epsilon != 1.0 or np.any(self.shift):
            return FunctionalSpace()
        entries = []
        for h in self.h_functions():
            entries.append(ConstraintFunction(
                name=h.name, psi=h, h=h,
                C1=lambda sigma: -1.0,
                C2=lambda sigma, h=h: float(constraint_values(sigma, [h])[0]),
            ))
        return FunctionalSpace(entries)

    def monotonicity_constant(self) -> float:
        return 1.0

    def w1_lipschitz_constant(self) -> float:
        return self.epsilon

    def to_dict(self) -> Dict:
        return {"variant": self.variant, "epsilon": self.epsilon, "shift": self.shift.tolist()}


class ConvolutionKernel(DriftModel):
    """b(x, mu) = b0(x) + eps * ∫K(x, y) mu(dy)"""

    variant = "ConvolutionKernel"

    def __init__(self, base: BaseField, kernel: Kernel, epsilon: float):
        if base.dim != kernel.dim:
            raise ValueError("Размерности базового поля и ядра не совпадают")
        super().__init__(base.dim, epsilon)
        self.base = base
        self.kernel = kernel

    def base_drift(self, points) -> np.ndarray:
        return self.base(points)

    def drift(self, points, nodes, weights) -> np.ndarray:
        result = self.base(points)
        if self.epsilon:
            result = result + self.epsilon * self.kernel.average(points, nodes, weights)
        return result

    def interaction_kernel(self) -> Kernel:
        return KernelSum([(-1.0, FieldKernel(self.base)), (-self.epsilon, self.kernel)])

    def monotonicity_constant(self) -> float:
        return self.base.monotonicity_constant()

    def w1_lipschitz_constant(self) -> float:
        return self.epsilon * self.kernel.lipschitz_y()

    def interaction_sup(self) -> float:
        return self.kernel.sup_norm()

    def to_dict(self) -> Dict:
        return {"variant": self.variant, "epsilon": self.epsilon,
                "base": self.base.to_dict(), "kernel": self.kernel.to_dict()}


class RvhModel(DriftModel):
    """
    b(x, mu) = -R x + (∫<v, y> mu(dy)) h + eps * ∫H(x, y) mu(dy)

    Требования: R^T v = lambda v, <v, h> = lambda, <H(x, y), v> = 0,
    <Rx, x> >= q|x|^2 с q > 0.
    """

    variant = "RvhModel"

    def __init__(self, R, v, h, epsilon: float = 0.0, H: Optional[BoundedTrigKernel] = None,
                 q: Optional[float] = None, seed: int = 0):
        v = np.asarray(v, dtype=float).ravel()
        super().__init__(v.size, epsilon)
        self.R = np.asarray(R, dtype=float).reshape(self.dim, self.dim)
        self.v = v
        self.h = np.asarray(h, dtype=float).ravel()
        self.H = H
        self.eigenvalue = float(self.v @ self.h)

        gap = np.linalg.norm(self.R.T @ self.v - self.eigenvalue * self.v)
        if gap > IDENTITY_TOLERANCE:
            raise ValueError(f"Нарушено R^T v = <v,h> v: невязка {gap:.3e}")

        symmetric = 0.5 * (self.R + self.R.T)
        q_max = float(np.min(np.linalg.eigvalsh(symmetric)))
        self.q = q_max if q is None else float(q)
        if self.q <= 0 or self.q > q_max + IDENTITY_TOLERANCE:
            raise ValueError(f"Нижняя граница q={self.q} должна лежать в (0, {q_max}]")

        if H is not None:
            if H.dim != self.dim:
                raise ValueError("Размерность H не совпадает с размерностью модели")
            rng = np.random.default_rng(seed)
            x = rng.uniform(-10.0, 10.0, size=(IDENTITY_SAMPLES, self.dim))
            y = rng.uniform(-10.0, 10.0, size=(IDENTITY_SAMPLES, self.dim))
            residual = np.max(np.abs(H.evaluate(x, y) @ self.v))
            if residual > IDENTITY_TOLERANCE:
                raise ValueError(f"Нарушено <H(x,y), v> = 0: невязка {residual:.3e}")

    def base_drift(self, points) -> np.ndarray:
        return -point_array(points) @ self.R.T

    def drift(self, points, nodes, weights) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)
        constraint = float(weights @ (point_array(nodes) @ self.v))
        result = self.base_drift(points) + constraint * self.h
        if self.H is not None and self.epsilon:
            result = result + self.epsilon * self.H.average(points, nodes, weights)
        return result

    def interaction_kernel(self) -> Kernel:
        terms = [(1.0, LinearKernel(P=self.R, Q=-np.outer(self.h, self.v), dim=self.dim))]
        if self.H is not None:
            terms.append((-self.epsilon, self.H))
        return KernelSum(terms)

    def h_functions(self) -> List[TestFunction]:
        return [LinearForm(self.v, name="<v, x>")]

    def constraint_space(self) -> FunctionalSpace:
        h = self.h_functions()[0]
        lam = self.eigenvalue
        return FunctionalSpace([ConstraintFunction(
            name=h.name, psi=h, h=h,
            C1=lambda sigma: -lam,
            C2=lambda sigma: lam * float(constraint_values(sigma, [h])[0]),
        )])

    def monotonicity_constant(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.R + self.R.T))))

    def w1_lipschitz_constant(self) -> float:
        lipschitz = np.linalg.norm(self.h) * np.linalg.norm(self.v)
        if self.H is not None:
            lipschitz += self.epsilon * self.H.lipschitz_y()
        return float(lipschitz)

    def interaction_sup(self) -> float:
        return self.H.sup_norm() if self.H is not None else 0.0

    def to_dict(self) -> Dict:
        data = {"variant": self.variant, "epsilon": self.epsilon, "R": self.R.tolist(),
                "v": self.v.tolist(), "h": self.h.tolist(), "q": self.q}
        if self.H is not None:
            data["H"] = self.H.to_dict()
        return data


class GradientConfining(DriftModel):
    """b(x, mu) = -grad U(x) + eps * ∫K(x, y) mu(dy)"""

    variant = "GradientConfining"

    def __init__(self, coefficients, epsilon: float = 0.0, kernel: Optional[Kernel] = None, dim: int = 1):
        super().__init__(dim, epsilon)
        self.field = PolynomialGradientField(coefficients, dim=dim)
        self.kernel = kernel

    def base_drift(self, points) -> np.ndarray:
        return self.field(points)

    def potential(self, points) -> np.ndarray:
        return self.field.potential(points)

    def drift(self, points, nodes, weights) -> np.ndarray:
        result = self.field(points)
        if self.kernel is not None and self.epsilon:
            result = result + self.epsilon * self.kernel.average(points, nodes, weights)
        return result

    def interaction_kernel(self) -> Kernel:
        terms = [(-1.0, FieldKernel(self.field))]
        if self.kernel is not None:
            terms.append((-self.epsilon, self.kernel))
        return KernelSum(terms)

    def monotonicity_constant(self) -> float:
        return self.field.monotonicity_constant()

    def w1_lipschitz_constant(self) -> float:
        if self.kernel is None:
            return 0.0
        return self.epsilon * self.kernel.lipschitz_y()

    def interaction_sup(self) -> float:
        return self.kernel.sup_norm() if self.kernel is not None else 0.0

    def to_dict(self) -> Dict:
        data = {"variant": self.variant, "epsilon": self.epsilon, "coefficients": self.field.coefficients}
        if self.kernel is not None:
            data["kernel"] = self.kernel.to_dict()
        return data


def model_from_dict(data: Dict, dim: int) -> DriftModel:
    """Модель сноса из блока [drift] сценария"""
    variant = data.get("variant")
    epsilon = float(data.get("epsilon", 0.0))
    if variant == "MeanFieldLinear":
        return MeanFieldLinear(epsilon, data.get("shift", 0.0), dim=dim)
    if variant == "ConvolutionKernel":
        return ConvolutionKernel(field_from_dict(data.get("base", {}), dim),
                                 kernel_from_dict(data["kernel"], dim), epsilon)
    if variant == "RvhModel":
        H = kernel_from_dict(data["H"], dim) if "H" in data else None
        return RvhModel(data["R"], data["v"], data["h"], epsilon, H=H, q=data.get("q"))
    if variant == "GradientConfining":
        kernel = kernel_from_dict(data["kernel"], dim) if "kernel" in data else None
        return GradientConfining(data["coefficients"], epsilon, kernel=kernel, dim=dim)
    raise ValueError(f"Неизвестный вариант модели сноса: {variant}")


def eval_drift(model: DriftModel, x, density: DensityField) -> np.ndarray:
    """b_eps(x, mu) в одной точке"""
    return model.eval_drift(x, density)


def drift_field(model: DriftModel, density: DensityField) -> np.ndarray:
    """b_eps(., mu) во всех центрах ячеек"""
    return model.drift_field(density)
