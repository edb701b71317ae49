"""
Нелинейная задача Коши: снос пересчитывается по текущему решению
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from measures.grid import DensityField
from measures.weights import DiffusionSpec, WeightFunction
from measures.metrics import moment_V, weighted_tv
from drift.models import DriftModel
from solvers.linear_solver import (
    SolveConfig, LinearStepper, check_confining, default_dt, warn_boundary_band
)
from solvers.trajectory import Trajectory, TrajectoryRecorder, time_grid
from utils.exceptions import NoConvergence

logger = logging.getLogger(__name__)


def _time_grid_for(nu: DensityField, model: DriftModel, cfg: SolveConfig):
    drift = model.drift_field(nu)
    check_confining(nu.grid, drift, cfg.confinement)
    dt = cfg.dt or default_dt(nu.grid, drift)
    return drift, time_grid(cfg.T, dt, cfg.snapshot_stride)


def evolve_nonlinear(nu: DensityField, model: DriftModel, diffusion: DiffusionSpec, cfg: SolveConfig,
                     weight: Optional[WeightFunction] = None,
                     functionals: Optional[Dict] = None) -> Trajectory:
    """
    Решение нелинейного уравнения с пересчетом сноса

    Снос b(., mu_t) пересчитывается каждые cfg.drift_lag шагов и
    используется в неявном шаге линейной схемы (нелинейность с запаздыванием).

    Args:
        nu (DensityField): Начальная мера
        model (DriftModel): Модель сноса
        diffusion (DiffusionSpec): Диффузия
        cfg (SolveConfig): Параметры интегрирования
        weight (WeightFunction, optional): Пара (V, W) для канала ∫V dmu_t
        functionals (dict, optional): Дополнительные каналы name -> phi

    Returns:
        Trajectory: Траектория решения
    """
    drift, (dt, n_steps, snapshot_every) = _time_grid_for(nu, model, cfg)
    recorder = TrajectoryRecorder(nu, weight, functionals, snapshot_every, n_steps)
    recorder.trajectory.metadata.update({"dt": dt, "steps": n_steps, "model": model.to_dict()})
    if n_steps == 0:
        return recorder.finish()

    logger.info(f"Нелинейная эволюция {model}: {n_steps} шагов dt={dt:.3e}, запаздывание {cfg.drift_lag}")
    current = nu
    stepper = None
    for n in range(1, n_steps + 1):
        if stepper is None or (n - 1) % cfg.drift_lag == 0:
            if n > 1:
                drift = model.drift_field(current)
            stepper = LinearStepper(nu.grid, drift, diffusion, dt, cfg.scheme, cfg.stepping)
        current = stepper.step(current)
        recorder.record(n, n * dt, current)
    warn_boundary_band(current, "Нелинейная эволюция: ")
    return recorder.finish()


def _sweep(nu: DensityField, path: List[np.ndarray], model: DriftModel, diffusion: DiffusionSpec,
           dt: float, cfg: SolveConfig) -> List[np.ndarray]:
    """Решение линейной задачи с замороженным по пути сносом b(x, sigma_t)"""
    grid = nu.grid
    new_path = [nu.values]
    current = nu
    for n in range(len(path) - 1):
        sigma = DensityField(grid, path[n])
        stepper = LinearStepper(grid, model.drift_field(sigma), diffusion, dt, cfg.scheme, cfg.stepping)
        current = stepper.step(current)
        new_path.append(current.values)
    return new_path


def picard_iterate(nu: DensityField, model: DriftModel, diffusion: DiffusionSpec, cfg: SolveConfig,
                   weight: Optional[WeightFunction] = None, max_sweeps: Optional[int] = None,
                   initial_path: str = "constant") -> Trajectory:
    """
    Итерации Пикара по путям: sigma^(k+1) решает линейную задачу с b(x, sigma^(k)_t)

    Args:
        initial_path (str): "constant" (sigma_t = nu) или "linear" (решение с b(x, nu))

    Returns:
        Trajectory: Неподвижная точка; в metadata число итераций и история сжатия
    """
    weight = weight or WeightFunction()
    max_sweeps = max_sweeps or cfg.picard_max_sweeps
    drift, (dt, n_steps, snapshot_every) = _time_grid_for(nu, model, cfg)
    grid = nu.grid

    if initial_path == "constant":
        path = [nu.values] * (n_steps + 1)
    elif initial_path == "linear":
        stepper = LinearStepper(grid, drift, diffusion, dt, cfg.scheme, cfg.stepping)
        path = [nu.values]
        for _ in range(n_steps):
            path.append(stepper.step_values(path[-1]))
    else:
        raise ValueError(f"Неизвестный начальный путь: {initial_path}")

    residuals = []
    for sweep in range(1, max_sweeps + 1):
        new_path = _sweep(nu, path, model, diffusion, dt, cfg)
        residual = max(
            weighted_tv(DensityField(grid, a), DensityField(grid, b), weight)
            for a, b in zip(new_path, path)
        )
        residuals.append(residual)
        path = new_path
        logger.debug(f"Пикар: итерация {sweep}, невязка {residual:.3e}")
        if residual < cfg.picard_tol:
            break
    else:
        raise NoConvergence(
            f"Итерации Пикара не сошлись за {max_sweeps} итераций (невязка {residuals[-1]:.3e})",
            history={"residual": residuals, "contraction": _ratios(residuals)},
            iterations=max_sweeps,
        )

    recorder = TrajectoryRecorder(nu, weight, None, snapshot_every, n_steps)
    for n in range(1, n_steps + 1):
        recorder.record(n, n * dt, DensityField(grid, path[n]))
    trajectory = recorder.finish()
    trajectory.metadata.update({
        "dt": dt, "steps": n_steps, "picard_sweeps": len(residuals),
        "picard_residuals": residuals, "contraction_factors": _ratios(residuals),
    })
    logger.info(f"Пикар сошелся: {len(residuals)} итераций, невязка {residuals[-1]:.3e}")
    return trajectory


def _ratios(values: List[float]) -> List[float]:
    return [b / a if a > 0 else 0.0 for a, b in zip(values, values[1:])]


@dataclass
class MomentBoundReport:
    times: np.ndarray
    moments: np.ndarray
    bounds: np.ndarray
    margins: np.ndarray = field(init=False)

    def __post_init__(self):
        self.margins = self.bounds - self.moments

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))

    def to_dict(self) -> Dict:
        return {"min_margin": self.min_margin, "times": self.times, "margins": self.margins}


def moment_bound_check(trajectory: Trajectory, weight: WeightFunction, C: float, Lambda: float,
                       delta: float = 0.0) -> MomentBoundReport:
    """
    Запас в оценке Гронуолла для ∫V dmu_t

    bound(t) = (∫V dnu - C/Lambda) exp(-Lambda (1 - delta) t) + C/Lambda
    """
    times = np.array(trajectory.times)
    moments = np.array([moment_V(s, weight) for s in trajectory.snapshots])
    ratio = C / Lambda
    bounds = (moments[0] - ratio) * np.exp(-Lambda * (1.0 - delta) * times) + ratio
    report = MomentBoundReport(times, moments, bounds)
    logger.info(f"Проверка оценки момента: минимальный запас {report.min_margin:.3e}")
    return report
