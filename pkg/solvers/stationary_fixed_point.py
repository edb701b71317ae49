"""
Стационарные решения нелинейного уравнения как неподвижные точки отображения T

T(sigma) - вероятностное решение линейного уравнения L_sigma* mu = 0.
Ограничения mu(h) = Q выбирают ветвь, когда решений несколько.
"""
import os
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from config.settings import FPKLAB_THREADS
from measures.grid import DensityField, GridSpec, make_gaussian, normalize, mean_vector
from measures.weights import DiffusionSpec, WeightFunction
from measures.metrics import moment_V, weighted_tv
from drift.models import DriftModel, RvhModel
from invariants.functions import project_constraints, constraint_values
from solvers.linear_solver import SolveConfig, solve_linear_stationary
from solvers.nonlinear_cauchy import evolve_nonlinear
from utils.exceptions import NoConvergence
from utils.io_utils import write_density_csv, write_json

logger = logging.getLogger(__name__)

DEFAULT_FIXED_POINT_TOL = 1e-8
DEFAULT_MAX_ITERATIONS = 100


@dataclass
class StationaryResult:
    """Результат поиска неподвижной точки T"""
    density: DensityField
    residual: float
    iterations: int
    constraints: Dict[str, float] = field(default_factory=dict)
    moment_V: float = float("nan")
    converged: bool = False
    history: Dict[str, List] = field(default_factory=dict)
    error: Optional[str] = None

    def summary(self) -> Dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "constraints": self.constraints,
            "moment_V": self.moment_V,
            "mean": mean_vector(self.density).tolist(),
            "converged": self.converged,
            "error": self.error,
        }

    def export(self, output_dir: str, name: str = "stationary") -> List[str]:
        """CSV плотности и JSON с характеристиками"""
        density_path = write_density_csv(self.density, os.path.join(output_dir, f"{name}.csv"))
        sidecar = write_json(os.path.join(output_dir, f"{name}.json"), self.summary())
        return [density_path, sidecar]


def t_map(sigma: DensityField, model: DriftModel, diffusion: DiffusionSpec, cfg: SolveConfig,
          weight: Optional[WeightFunction] = None) -> DensityField:
    """T(sigma): стационарное решение линейного уравнения со сносом b(., sigma)"""
    drift = model.drift_field(sigma)
    return solve_linear_stationary(drift, diffusion, cfg, sigma.grid, weight)


def t_map_moment_margin(sigma: DensityField, image: DensityField, weight: WeightFunction,
                        C: float, Lambda: float, delta: float = 0.0) -> float:
    """(1 - delta) C / Lambda + delta ∫V dsigma - ∫V dT(sigma)"""
    return (1 - delta) * C / Lambda + delta * moment_V(sigma, weight) - moment_V(image, weight)


def find_stationary(model: DriftModel, diffusion: DiffusionSpec, cfg: SolveConfig, guess: DensityField,
                    targets=None, damping: float = 1.0, tol: float = DEFAULT_FIXED_POINT_TOL,
                    max_iterations: int = DEFAULT_MAX_ITERATIONS,
                    weight: Optional[WeightFunction] = None) -> StationaryResult:
    """
    Затухающая итерация mu <- (1 - theta) mu + theta T(mu) с проекцией на ограничения

    Args:
        model (DriftModel): Модель сноса
        diffusion (DiffusionSpec): Диффузия
        cfg (SolveConfig): Параметры линейного стационарного решателя
        guess (DensityField): Начальное приближение
        targets: Значения Q для функций model.h_functions() (None - без ограничений)
        damping (float): Коэффициент затухания theta из (0, 1]
        tol (float): Допуск по невязке ||T(mu) - mu||_W
        max_iterations (int): Предел числа итераций
        weight (WeightFunction, optional): Вес невязки

    Returns:
        StationaryResult: Сошедшийся результат
    """
    if not 0 < damping <= 1:
        raise ValueError(f"Коэффициент затухания {damping} должен лежать в (0, 1]")
    weight = weight or WeightFunction()
    h_functions = model.h_functions() if targets is not None else []
    names = [h.name for h in h_functions]

    current = normalize(guess)
    if h_functions:
        current = project_constraints(current, h_functions, targets)

    history = {"residual": [], "mean": [], "constraint_drift": []}
    increases = 0
    theta = damping
    residual = float("inf")
    for iteration in range(1, max_iterations + 1):
        image = t_map(current, model, diffusion, cfg, weight)
        residual = weighted_tv(image, current, weight)
        history["residual"].append(residual)
        history["mean"].append(mean_vector(current).tolist())
        if h_functions:
            drift = constraint_values(image, h_functions) - constraint_values(current, h_functions)
            history["constraint_drift"].append(float(np.max(np.abs(drift))))
        logger.debug(f"Итерация T {iteration}: невязка {residual:.3e}")

        if residual < tol:
            values = constraint_values(current, h_functions) if h_functions else []
            result = StationaryResult(
                density=current, residual=residual, iterations=iteration,
                constraints=dict(zip(names, map(float, values))),
                moment_V=moment_V(current, weight), converged=True, history=history,
            )
            logger.info(f"Стационарное решение найдено за {iteration} итераций (невязка {residual:.3e})")
            return result

        if len(history["residual"]) >= 3:
            r = history["residual"]
            increases = increases + 1 if r[-1] > r[-2] else 0
            if increases >= 2 and theta > 0.5:
                theta = 0.5
                logger.warning(f"Невязка растет дважды подряд, затухание уменьшено до {theta}")

        updated = current.with_values((1 - theta) * current.values + theta * image.values)
        current = normalize(updated)
        if h_functions:
            current = project_constraints(current, h_functions, targets)

    raise NoConvergence(
        f"Неподвижная точка T не найдена за {max_iterations} итераций (невязка {residual:.3e})",
        history=history, iterations=max_iterations,
    )


def branch_guess(grid: GridSpec, model: DriftModel, Q: float) -> DensityField:
    """Гауссовское приближение в центре области, спроецированное на ветвь Q"""
    center = 0.5 * (np.array(grid.lower) + np.array(grid.upper))
    half = 0.5 * (np.array(grid.upper) - np.array(grid.lower))
    variance = np.minimum(1.0, (half / 8.0) ** 2)
    guess = make_gaussian(grid, center, variance)
    return project_constraints(guess, model.h_functions(), [Q])


def branch_moment_bound(model: RvhModel, diffusion: DiffusionSpec, Q: float) -> float:
    """Оценка ∫(1+|x|^2) dmu для ветви Q: 2 tr(A)/q + 1 + ((|h||Q| + sup|H|)/q)^2"""
    bound = np.linalg.norm(model.h) * abs(Q) + model.interaction_sup()
    return float(2 * np.sum(diffusion.diagonal) / model.q + 1 + (bound / model.q) ** 2)


def branch_sweep(model: DriftModel, diffusion: DiffusionSpec, cfg: SolveConfig, grid: GridSpec,
                 Q_values: Sequence[float], damping: float = 1.0, tol: float = DEFAULT_FIXED_POINT_TOL,
                 max_iterations: int = DEFAULT_MAX_ITERATIONS, weight: Optional[WeightFunction] = None,
                 threads: int = FPKLAB_THREADS) -> List[StationaryResult]:
    """
    Стационарные решения для набора значений ограничения Q

    Ошибки сходимости фиксируются в результате соответствующего Q.
    """
    if len(model.h_functions()) != 1:
        raise ValueError(f"Свип по Q требует одной функции ограничения, у {model} их {len(model.h_functions())}")

    def solve(Q):
        guess = branch_guess(grid, model, Q)
        try:
            return find_stationary(model, diffusion, cfg, guess, targets=[Q], damping=damping,
                                   tol=tol, max_iterations=max_iterations, weight=weight)
        except NoConvergence as e:
            logger.error(f"Ветвь Q={Q}: {str(e)}")
            return StationaryResult(density=guess, residual=e.history.get("residual", [np.inf])[-1],
                                    iterations=e.iterations or 0, converged=False,
                                    history=e.history, error=str(e))

    logger.info(f"Свип по Q: {list(Q_values)} ({threads} потоков)")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(solve, Q_values))


def verify_under_flow(result: StationaryResult, model: DriftModel, diffusion: DiffusionSpec,
                      cfg: SolveConfig, T: float = 5.0, weight: Optional[WeightFunction] = None) -> float:
    """||mu_T - mu||_W после эволюции нелинейным потоком из mu"""
    weight = weight or WeightFunction()
    flow_cfg = SolveConfig(**{**cfg.to_dict(), "T": T})
    trajectory = evolve_nonlinear(result.density, model, diffusion, flow_cfg, weight)
    return weighted_tv(trajectory.final, result.density, weight)
