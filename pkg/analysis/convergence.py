"""
Количественная проверка сходимости к стационарному решению
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from measures.grid import DensityField
from measures.weights import WeightFunction, DiffusionSpec
from measures.metrics import weighted_tv, w1_1d
from drift.models import DriftModel
from invariants.functions import project_constraints
from solvers.trajectory import Trajectory
from utils.exceptions import WindowTooShort, HypothesisViolated, DimensionUnsupported

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 5
FIT_FLOOR = 1e-14


@dataclass
class DecayFit:
    """Подгонка value ~ alpha1 * exp(-alpha2 t)"""
    alpha1: float
    alpha2: float
    window: Tuple[float, float]
    r2: float
    residuals: np.ndarray = field(repr=False)
    points: int = 0

    def to_dict(self) -> Dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "r2": self.r2,
                "window": list(self.window), "points": self.points}


def decay_rate_fit(times: Sequence[float], values: Sequence[float],
                   window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """
    Прямая наименьших квадратов по (t, log value)

    Args:
        times: Моменты времени
        values: Положительные значения ряда
        window: Окно [t_lo, t_hi]; по умолчанию вторая половина ряда

    Returns:
        DecayFit: alpha2 = -наклон, alpha1 = exp(свободный член)
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = (times[0] + 0.5 * (times[-1] - times[0]), times[-1])
    lo, hi = window
    mask = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    t, v = times[mask], values[mask]

    # Значения ниже порога обрезают окно
    below = np.nonzero(~(v > FIT_FLOOR))[0]
    if below.size:
        t, v = t[:below[0]], v[:below[0]]
    if t.size < MIN_FIT_POINTS:
        raise WindowTooShort(f"В окне [{lo}, {hi}] {t.size} точек, нужно не меньше {MIN_FIT_POINTS}")

    log_v = np.log(v)
    fit = linregress(t, log_v)
    residuals = log_v - (fit.intercept + fit.slope * t)
    result = DecayFit(
        alpha1=float(np.exp(fit.intercept)), alpha2=float(-fit.slope),
        window=(float(t[0]), float(t[-1])), r2=float(fit.rvalue ** 2),
        residuals=residuals, points=int(t.size),
    )
    logger.info(f"Подгонка затухания: alpha2={result.alpha2:.4f}, alpha1={result.alpha1:.4f}, R2={result.r2:.5f}")
    return result


def tv_decay_series(trajectory: Trajectory, stationary: DensityField,
                    weight: Optional[WeightFunction] = None) -> Tuple[np.ndarray, np.ndarray]:
    """||mu_t - mu||_W по снимкам траектории"""
    values = [weighted_tv(s, stationary, weight) for s in trajectory.snapshots]
    return np.array(trajectory.times), np.array(values)


@dataclass
class LyapunovReport:
    max_margin: float
    per_measure: List[float]
    samples: int

    @property
    def satisfied(self) -> bool:
        return self.max_margin <= 1e-9

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["satisfied"] = self.satisfied
        return data


def lyapunov_check(model: DriftModel, weight: WeightFunction, C1: float, C2: float,
                   measures: Sequence[DensityField], diffusion: DiffusionSpec, samples: int = 10000,
                   targets=None, seed: int = 0, box=None) -> LyapunovReport:
    """
    max (L_mu V - (C1 - C2 V)) по выборке точек для каждой тестовой меры

    Неположительный максимум означает выполнение L_mu V <= C1 - C2 V.
    """
    measures = list(measures)
    if targets is not None and model.h_functions():
        measures = [project_constraints(m, model.h_functions(), targets) for m in measures]
    grid = measures[0].grid
    rng = np.random.default_rng(seed)
    lower, upper = box if box is not None else (grid.lower, grid.upper)
    points = rng.uniform(lower, upper, size=(samples, grid.dim))
    V = weight.V(points)
    margins = []
    for density in measures:
        drift = model.drift(points, density.grid.centers, density.cell_masses)
        LV = weight.generator_V(points, drift, diffusion)
        margins.append(float(np.max(LV - (C1 - C2 * V))))
    report = LyapunovReport(max_margin=max(margins), per_measure=margins, samples=samples)
    logger.info(f"Проверка L V <= C1 - C2 V: максимальный запас {report.max_margin:.3e}")
    return report


def lyapunov_constants_for_dissipative_drift(m: float, gamma1: float, gamma2: float, dim: int,
                                             a_max: float = 1.0):
    """
    Константы L V <= C1 - C2 V для V = (1+|x|^2)^p, p = m + 1/2,
    при <b(x, mu), x> <= gamma1 - gamma2 |x|^2

    Returns:
        Tuple[float, float, WeightFunction]: (C1, C2, пара весов)
    """
    if gamma2 <= 0:
        raise ValueError("gamma2 должна быть положительной")
    p = m + 0.5
    D = a_max * (dim + 2 * (p - 1)) + gamma1 + gamma2
    C2 = p * gamma2
    s_star = 2 * D * (p - 1) / (p * gamma2)
    if s_star >= 1:
        C1 = 2 * D * s_star ** (p - 1)
    else:
        C1 = 2 * p * D - p * gamma2
    return float(C1), float(C2), WeightFunction.dissipative_pair(m)


@dataclass
class W1ContractionReport:
    times: np.ndarray
    distances: np.ndarray
    bounds: np.ndarray
    rate: float

    @property
    def margins(self) -> np.ndarray:
        return self.bounds - self.distances

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))

    def to_dict(self) -> Dict:
        return {"rate": self.rate, "min_margin": self.min_margin,
                "times": self.times, "margins": self.margins}


def w1_series(trajectory: Trajectory, stationary: DensityField) -> Tuple[np.ndarray, np.ndarray]:
    """W1(mu_t, mu) по снимкам"""
    if stationary.grid.dim != 1:
        raise DimensionUnsupported("W1 поддерживается только в размерности 1")
    return np.array(trajectory.times), np.array([w1_1d(s, stationary) for s in trajectory.snapshots])


def w1_contraction_check(trajectory: Trajectory, stationary: DensityField, kappa: float,
                         C_lip: float) -> W1ContractionReport:
    """
    margin(t) = exp(-(kappa - C) t) W1(nu, mu) - W1(mu_t, mu)

    Raises:
        HypothesisViolated: если C >= kappa
    """
    if C_lip >= kappa:
        raise HypothesisViolated(f"Требуется C < kappa, получено C={C_lip}, kappa={kappa}")
    times, distances = w1_series(trajectory, stationary)
    rate = kappa - C_lip
    bounds = np.exp(-rate * times) * distances[0]
    report = W1ContractionReport(times, distances, bounds, rate)
    logger.info(f"Сжатие W1 со скоростью {rate}: минимальный запас {report.min_margin:.3e}")
    return report
