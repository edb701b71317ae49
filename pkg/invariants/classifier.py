"""
Классификация функций psi по поточечным тождествам ядра

Соглашение: b(x, mu) = -∫K(x, y) mu(dy), диффузия A = I.
I0: Δpsi(x) + Δpsi(y) - <K(x,y), ∇psi(x)> - <K(y,x), ∇psi(y)> = 0;
I+: та же комбинация равна lambda (psi(x) + psi(y)) с lambda > 0.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config.settings import MEMBERSHIP_TOLERANCE, DEFAULT_SEED
from measures.grid import DensityField, GridSpec, make_gaussian
from measures.weights import WeightFunction, DiffusionSpec
from drift.kernels import Kernel
from drift.models import DriftModel
from invariants.functions import TestFunction, FunctionalSpace
from utils.exceptions import NonSmoothPsi, AnisotropicDiffusion

logger = logging.getLogger(__name__)

I0 = "I0"
IPLUS = "Iplus"
NEITHER = "Neither"

DIAGONAL_POINTS = 50
GROWTH_RADII = (10.0, 100.0, 1000.0)


@dataclass
class InvariantReport:
    psi: TestFunction
    classification: str
    lam: Optional[float]
    max_residual: float
    growth_ok: bool
    growth_ratios: List[float] = field(default_factory=list)
    samples: int = 0

    def to_dict(self) -> Dict:
        return {
            "psi": self.psi.name, "class": self.classification, "lambda": self.lam,
            "max_residual": self.max_residual, "growth_ok": self.growth_ok,
            "growth_ratios": self.growth_ratios, "samples": self.samples,
        }


def _pair_combination(psi: TestFunction, kernel: Kernel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (psi.laplacian(x) + psi.laplacian(y)
            - np.sum(kernel.evaluate(x, y) * psi.gradient(x), axis=1)
            - np.sum(kernel.evaluate(y, x) * psi.gradient(y), axis=1))


def growth_check(psi: TestFunction, weight: WeightFunction, directions: np.ndarray):
    """
    sup (|psi| + |∇psi| + |D^2 psi|) / W вдоль лучей

    Returns:
        Tuple[bool, List[float]]: признак ограниченности и отношения на радиусах
    """
    ratios = []
    for radius in GROWTH_RADII:
        points = radius * directions
        total = (np.abs(psi.value(points))
                 + np.linalg.norm(psi.gradient(points), axis=1)
                 + np.linalg.norm(psi.hessian(points), axis=(1, 2)))
        with np.errstate(over="ignore", invalid="ignore"):
            ratios.append(float(np.max(total / weight.W(points))))
    bounded = all(np.isfinite(ratios)) and ratios[-1] <= ratios[0] * (1 + 1e-6) + 1e-12
    return bounded, ratios


def check_membership(psi: TestFunction, kernel: Kernel, candidate_lambda: Optional[float] = None,
                     samples: int = 1000, seed: int = DEFAULT_SEED,
                     diffusion: Optional[DiffusionSpec] = None, weight: Optional[WeightFunction] = None,
                     box: float = 5.0, tol: float = MEMBERSHIP_TOLERANCE) -> InvariantReport:
    """
    Отнесение psi к I0, I+(lambda) или ни к одному классу

    Args:
        psi (TestFunction): Функция с производными в замкнутой форме
        kernel (Kernel): Ядро в соглашении b = -∫K dmu
        candidate_lambda (float, optional): Кандидат lambda; иначе подгоняется по диагонали
        samples (int): Число случайных пар (x, y)
        seed (int): Зерно генератора
        diffusion (DiffusionSpec, optional): Диффузия (должна быть единичной)
        weight (WeightFunction, optional): Вес для проверки роста
        box (float): Полуширина куба выборки

    Returns:
        InvariantReport: Класс, lambda и максимальная невязка
    """
    if not psi.has_derivatives:
        raise NonSmoothPsi(f"Функция '{psi.name}' задана без производных")
    if diffusion is not None and not diffusion.is_identity:
        raise AnisotropicDiffusion(f"Тождества сформулированы для A = I, получено {diffusion.diagonal}")
    if psi.dim != kernel.dim:
        raise ValueError(f"Размерности psi ({psi.dim}) и ядра ({kernel.dim}) не совпадают")

    rng = np.random.default_rng(seed)
    dim = kernel.dim
    x = rng.uniform(-box, box, size=(samples, dim))
    y = rng.uniform(-box, box, size=(samples, dim))
    diagonal = rng.uniform(-box, box, size=(DIAGONAL_POINTS, dim))
    # Диагональ входит в выборку
    x_all = np.vstack([x, diagonal])
    y_all = np.vstack([y, diagonal])

    combination = _pair_combination(psi, kernel, x_all, y_all)
    residual0 = float(np.max(np.abs(combination)))

    weight = weight or WeightFunction()
    directions = rng.normal(size=(16, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    growth_ok, ratios = growth_check(psi, weight, directions)

    def report(classification, lam, residual):
        result = InvariantReport(psi, classification, lam, residual, growth_ok, ratios, samples)
        logger.info(f"psi={psi.name}: класс {classification}, lambda={lam}, невязка {residual:.3e}")
        return result

    if residual0 <= tol:
        return report(I0, None, residual0)

    lam = candidate_lambda
    if lam is None:
        # Диагональ: Δpsi(x) - <K(x,x), ∇psi(x)> = lambda psi(x)
        left = psi.laplacian(diagonal) - np.sum(kernel.evaluate(diagonal, diagonal) * psi.gradient(diagonal), axis=1)
        values = psi.value(diagonal)
        denominator = float(np.dot(values, values))
        lam = float(np.dot(left, values) / denominator) if denominator > 0 else 0.0

    residual_plus = float(np.max(np.abs(combination - lam * (psi.value(x_all) + psi.value(y_all)))))
    if lam > 0 and residual_plus <= tol:
        return report(IPLUS, lam, residual_plus)
    return report(NEITHER, lam, residual0)


def verify_functional_space(model: DriftModel, space: FunctionalSpace, grid: GridSpec,
                            diffusion: DiffusionSpec, samples: int = 100, seed: int = DEFAULT_SEED) -> float:
    """
    max |L_sigma psi(x) - C1(sigma) h(x) - C2(sigma)| на случайных (x, sigma)

    sigma - гауссовские меры со случайными средними внутри сетки.
    """
    rng = np.random.default_rng(seed)
    center = 0.5 * (np.array(grid.lower) + np.array(grid.upper))
    half = 0.5 * (np.array(grid.upper) - np.array(grid.lower))
    std = np.minimum(1.0, half / 10.0)
    worst = 0.0
    for _ in range(samples):
        sigma = make_gaussian(grid, center + rng.uniform(-0.2, 0.2, size=grid.dim) * half, std ** 2)
        x = center + rng.uniform(-0.8, 0.8, size=(1, grid.dim)) * half
        drift = model.drift(x, sigma.grid.centers, sigma.cell_masses)
        for entry in space.entries:
            psi = entry.psi
            L_psi = (psi.hessian_diagonal(x) @ np.asarray(diffusion.diagonal)
                     + np.sum(drift * psi.gradient(x), axis=1))
            affine = entry.C1(sigma) * entry.h.value(x) + entry.C2(sigma)
            worst = max(worst, float(np.max(np.abs(L_psi - affine))))
    logger.info(f"Проверка пространства ограничений: максимальная невязка {worst:.3e}")
    return worst
