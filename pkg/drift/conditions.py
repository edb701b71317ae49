"""
Численная проверка условий на снос (диссипативность, рост, липшицевость по мере)

Проверка фальсифицирующая: неравенства вычисляются на выборке точек и
тестовых мер, отрицательный запас означает нарушение.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from config.settings import H_CHECK_SLACK
from measures.grid import DensityField, GridSpec, make_mixture
from measures.weights import WeightFunction, DiffusionSpec
from measures.metrics import moment_V, weighted_tv
from drift.models import DriftModel, MeanFieldLinear, RvhModel
from invariants.functions import project_constraints, constraint_values
from utils.exceptions import ConstantsMissing

logger = logging.getLogger(__name__)


@dataclass
class HConstants:
    """Кандидатные константы условий"""
    C: float
    Lambda: float
    delta: float = 0.0
    N1: float = 0.0
    N2: float = 0.0

    def halved(self) -> "HConstants":
        return HConstants(self.C / 2, self.Lambda, self.delta, self.N1 / 2, self.N2 / 2)


@dataclass
class HConditionsReport:
    C: float
    Lambda: float
    delta: float
    alpha: float
    N1: float
    N2: float
    C1: float
    C2: float
    theta: float
    margins: Dict[str, float] = field(default_factory=dict)
    samples: int = 0
    measures: int = 0
    source: str = "supplied"

    @property
    def violations(self) -> List[str]:
        return [name for name, margin in self.margins.items() if margin < -H_CHECK_SLACK]

    @property
    def violated(self) -> bool:
        return bool(self.violations)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["violations"] = self.violations
        return data


def closed_form_constants(model: DriftModel, weight: WeightFunction, diffusion: DiffusionSpec,
                    targets) -> Optional[HConstants]:
    """
    Константы в замкнутой форме для именованных примеров

    Выведены для V = 1 + |x|^2, gamma = 1/2 и eps <= 1; для остальных
    конфигураций возвращает None.
    """
    if weight.m != 1.0 or weight.gamma != 0.5 or model.epsilon > 1.0:
        return None
    trace = float(np.sum(diffusion.diagonal))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))

    if isinstance(model, MeanFieldLinear):
        c = np.linalg.norm(model.shift + model.epsilon * targets)
        return HConstants(C=2 * trace + 1 + c ** 2, Lambda=1.0, delta=0.0, N1=1 + c, N2=0.0)

    if isinstance(model, RvhModel):
        sup_h = model.interaction_sup()
        bound = np.linalg.norm(model.h) * abs(float(targets[0])) + sup_h
        return HConstants(
            C=2 * trace + model.q + bound ** 2 / model.q,
            Lambda=min(1.0, model.q),
            delta=0.0,
            N1=float(np.linalg.norm(model.R, 2)) + bound,
            N2=sup_h,
        )
    return None


def default_test_measures(model: DriftModel, grid: GridSpec, count: int = 10, seed: int = 0,
                          targets=None) -> List[DensityField]:
    """
    Случайные гауссовские смеси, спроецированные на ограничения модели

    Args:
        model (DriftModel): Модель (задает функции ограничений)
        grid (GridSpec): Сетка
        count (int): Число мер
        seed (int): Зерно генератора
        targets: Значения ограничений Q (None - без проекции)

    Returns:
        List[DensityField]: Тестовые меры
    """
    rng = np.random.default_rng(seed)
    center = 0.5 * (np.array(grid.lower) + np.array(grid.upper))
    half = 0.5 * (np.array(grid.upper) - np.array(grid.lower))
    std_max = np.minimum(0.75 * half / 7.0, np.sqrt(2.0))
    measures = []
    for _ in range(count):
        means = [center + rng.uniform(-0.25, 0.25, size=grid.dim) * half for _ in range(2)]
        variances = [rng.uniform(0.25, 1.0, size=grid.dim) * std_max ** 2 for _ in range(2)]
        weights = rng.uniform(0.2, 1.0, size=2)
        density = make_mixture(grid, weights, means, variances)
        if targets is not None and model.h_functions():
            density = project_constraints(density, model.h_functions(), targets)
        measures.append(density)
    return measures


def _fit_constants(V, LV, b_norm, pair_terms, weight: WeightFunction, epsilon: float) -> HConstants:
    """Подбор констант по выборке: Lambda по наклону, C по максимуму"""
    slope = linregress(V, LV).slope
    Lambda = -slope if slope < 0 else 1e-6
    if slope >= 0:
        logger.warning(f"LV не убывает по V (наклон {slope:.3e}), Lambda взята малой")
    C = float(np.max(LV + Lambda * V))
    N1 = float(np.max(b_norm / V ** (1.0 - weight.gamma)))
    N2 = 0.0
    if epsilon > 0:
        for diff, tv, V_pair in pair_terms:
            if tv > 0:
                N2 = max(N2, float(np.max(diff / (epsilon * V_pair ** (0.5 - weight.gamma) * tv))))
    return HConstants(C=C, Lambda=float(Lambda), delta=0.0, N1=N1, N2=N2)


def check_h_conditions(model: DriftModel, weight: WeightFunction, measures: Sequence[DensityField],
                       diffusion: DiffusionSpec, sample_points: int = 10000,
                       constants: Optional[HConstants] = None, auto_fit: bool = False,
                       targets=None, seed: int = 0, box=None) -> HConditionsReport:
    """
    Проверка трех неравенств на снос по выборке точек и пар мер

    (H1): L V <= (1 - delta) C + Lambda (delta alpha - V);
    (H2): |b| <= N1 V^(1 - gamma);
    (H3): |b(x, mu) - b(x, sigma)| <= eps N2 V^(1/2 - gamma) ||mu - sigma||_W
    для пар с равными значениями ограничений.

    Args:
        model (DriftModel): Модель сноса
        weight (WeightFunction): Пара (V, W)
        measures: Тестовые меры на общей сетке
        diffusion (DiffusionSpec): Диффузия
        sample_points (int): Число точек выборки
        constants (HConstants, optional): Кандидатные константы
        auto_fit (bool): Подбирать константы по выборке
        targets: Значения ограничений Q (по умолчанию - у первой меры)
        seed (int): Зерно генератора
        box: Пара (lower, upper) области выборки, по умолчанию сетка

    Returns:
        HConditionsReport: Отчет с минимальными запасами
    """
    measures = list(measures)
    if not measures:
        raise ValueError("Нужна хотя бы одна тестовая мера")
    grid = measures[0].grid
    h_functions = model.h_functions()
    if h_functions:
        if targets is None:
            targets = constraint_values(measures[0], h_functions)
        measures = [project_constraints(m, h_functions, targets) for m in measures]

    source = "supplied"
    if constants is None and not auto_fit:
        constants = closed_form_constants(model, weight, diffusion, targets if targets is not None else 0.0)
        source = "closed-form"
        if constants is None:
            raise ConstantsMissing(f"Для модели {model.variant} нет констант в замкнутой форме, "
                                   f"а автоподбор отключен")

    rng = np.random.default_rng(seed)
    lower, upper = box if box is not None else (grid.lower, grid.upper)
    points = rng.uniform(lower, upper, size=(sample_points, grid.dim))
    V = weight.V(points)

    alpha = max(moment_V(m, weight) for m in measures)
    drifts = [model.drift(points, m.grid.centers, m.cell_masses) for m in measures]
    generators = [weight.generator_V(points, b, diffusion) for b in drifts]
    pair_terms = []
    for i in range(len(measures)):
        for j in range(i + 1, len(measures)):
            diff = np.linalg.norm(drifts[i] - drifts[j], axis=1)
            pair_terms.append((diff, weighted_tv(measures[i], measures[j], weight), V))

    if constants is None:
        source = "fitted"
        constants = _fit_constants(np.tile(V, len(measures)), np.concatenate(generators),
                                   np.concatenate([np.linalg.norm(b, axis=1) for b in drifts]),
                                   pair_terms, weight, model.epsilon)

    C, Lambda, delta = constants.C, constants.Lambda, constants.delta
    h1 = min(float(np.min((1 - delta) * C + Lambda * (delta * alpha - V) - LV)) for LV in generators)
    h2 = min(float(np.min(constants.N1 * V ** (1 - weight.gamma) - np.linalg.norm(b, axis=1)))
             for b in drifts)
    h3 = float("inf")
    for diff, tv, _ in pair_terms:
        bound = model.epsilon * constants.N2 * V ** (0.5 - weight.gamma) * tv
        h3 = min(h3, float(np.min(bound - diff)))

    report = HConditionsReport(
        C=C, Lambda=Lambda, delta=delta, alpha=alpha, N1=constants.N1, N2=constants.N2,
        C1=(1 - delta) * C + Lambda * delta * alpha, C2=Lambda,
        theta=max(alpha, C / Lambda + 1.0),
        margins={"H1": h1, "H2": h2, "H3": h3 if pair_terms else 0.0},
        samples=sample_points, measures=len(measures), source=source,
    )
    if report.violated:
        logger.warning(f"Нарушены условия {report.violations} для {model}: {report.margins}")
    else:
        logger.info(f"Условия выполнены для {model} (минимальные запасы {report.margins})")
    return report
