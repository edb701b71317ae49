"""
Консервативный положительный решатель линейного уравнения ФПК с замороженным сносом

Схема конечных объемов с весами Чанга-Купера по сносу на гранях либо
с экспоненциальной подгонкой Шарфеттера-Гуммеля по сносу в центрах
ячеек (контрольная схема), нулевой поток на границе. Матрица генератора L
действует на значения в центрах ячеек: d rho/dt = L rho, сумма по
каждому столбцу L равна нулю.
"""
import logging
from dataclasses import dataclass, asdict
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu, spsolve
from scipy.special import exprel

from config.settings import MASS_TOLERANCE, BOUNDARY_BAND_WARNING, BOUNDARY_BAND_CELLS
from measures.grid import DensityField, GridSpec, normalize, boundary_band_mass
from measures.weights import DiffusionSpec, WeightFunction
from measures.metrics import weighted_tv
from invariants.functions import TestFunction
from solvers.trajectory import Trajectory, TrajectoryRecorder, time_grid
from utils.exceptions import StabilityViolation, NegativeDensity, NotConfining, NoConvergence

logger = logging.getLogger(__name__)

SCHEMES = ("ChangCooper", "ExponentialUpwind")
STEPPING = ("implicit", "explicit")
STATIONARY_MODES = ("DirectNullSpace", "LongTime")
CONFINEMENT = ("error", "warn")

# Допустимая отрицательность значения относительно максимума
NEGATIVITY_TOLERANCE = 1e-12


@dataclass
class SolveConfig:
    """Параметры интегрирования по времени и стационарного решения"""
    dt: Optional[float] = None
    T: float = 1.0
    scheme: str = "ChangCooper"
    stepping: str = "implicit"
    stationary_mode: str = "DirectNullSpace"
    stationary_tol: float = 1e-9
    max_iterations: int = 10000
    long_time_dt: float = 1.0
    snapshot_stride: float = 0.1
    drift_lag: int = 1
    confinement: str = "error"
    picard_tol: float = 1e-8
    picard_max_sweeps: int = 60

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"Шаг по времени dt={self.dt} должен быть положительным")
        if self.T < 0:
            raise ValueError(f"Горизонт T={self.T} должен быть неотрицательным")
        if self.scheme not in SCHEMES:
            raise ValueError(f"Неизвестная схема {self.scheme}, допустимы {SCHEMES}")
        if self.stepping not in STEPPING:
            raise ValueError(f"Неизвестный режим шага {self.stepping}, допустимы {STEPPING}")
        if self.stationary_mode not in STATIONARY_MODES:
            raise ValueError(f"Неизвестный стационарный режим {self.stationary_mode}")
        if self.confinement not in CONFINEMENT:
            raise ValueError(f"Неизвестный режим проверки удержания {self.confinement}")
        if self.stationary_tol <= 0 or self.picard_tol <= 0:
            raise ValueError("Допуски должны быть положительными")
        if self.drift_lag < 1 or self.max_iterations < 1 or self.snapshot_stride <= 0:
            raise ValueError("drift_lag, max_iterations и snapshot_stride должны быть положительными")

    def to_dict(self) -> Dict:
        return asdict(self)


def bernoulli(z: np.ndarray) -> np.ndarray:
    """B(z) = z / (e^z - 1)"""
    with np.errstate(over="ignore"):
        return 1.0 / exprel(np.asarray(z, dtype=float))


def chang_cooper_delta(P: np.ndarray) -> np.ndarray:
    """Вес Чанга-Купера delta(P) = 1/P - 1/(e^P - 1), delta(0) = 1/2"""
    P = np.asarray(P, dtype=float)
    small = np.abs(P) < 1e-5
    safe = np.where(small, 1.0, P)
    with np.errstate(over="ignore"):
        delta = 1.0 / safe - 1.0 / np.expm1(safe)
    return np.where(small, 0.5 - P / 12.0, delta)


def default_dt(grid: GridSpec, drift: np.ndarray) -> float:
    """Шаг по умолчанию h / (2 max|b| + 1)"""
    return float(np.min(grid.widths) / (2.0 * np.max(np.abs(drift)) + 1.0))


def _face_pairs(grid: GridSpec, axis: int):
    index = np.arange(grid.size).reshape(grid.shape)
    n = grid.cells[axis]
    p = np.take(index, np.arange(n - 1), axis=axis).ravel()
    q = np.take(index, np.arange(1, n), axis=axis).ravel()
    return p, q


def build_generator(grid: GridSpec, drift: np.ndarray, diffusion: DiffusionSpec,
                    scheme: str = "ChangCooper") -> sp.csr_matrix:
    """
    Сборка разреженной матрицы генератора

    Args:
        grid (GridSpec): Сетка
        drift (np.ndarray): Снос в центрах ячеек (size, dim)
        diffusion (DiffusionSpec): Постоянная диагональная диффузия
        scheme (str): ChangCooper или ExponentialUpwind

    Returns:
        sp.csr_matrix: L размера size x size
    """
    drift = np.asarray(drift, dtype=float).reshape(grid.size, grid.dim)
    rows, cols, data = [], [], []
    for k in range(grid.dim):
        h = grid.widths[k]
        a = diffusion.diagonal[k]
        p, q = _face_pairs(grid, k)
        if scheme == "ExponentialUpwind":
            # Экспоненциальная подгонка по сносу в центрах ячеек:
            # поток p -> q = (a/h) [B(-P_p) rho_p - B(P_q) rho_q]
            from_p = (a / h ** 2) * bernoulli(-drift[p, k] * h / a)
            from_q = (a / h ** 2) * bernoulli(drift[q, k] * h / a)
        else:
            # Поток p -> q: b [(1 - delta) rho_p + delta rho_q] - (a/h)(rho_q - rho_p)
            b_face = 0.5 * (drift[p, k] + drift[q, k])
            delta = chang_cooper_delta(b_face * h / a)
            from_p = b_face * (1.0 - delta) / h + a / h ** 2
            from_q = -b_face * delta / h + a / h ** 2
        rows.extend([p, p, q, q])
        cols.extend([p, q, p, q])
        data.extend([-from_p, from_q, from_p, -from_q])
    L = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )
    return L.tocsr()


def explicit_stability_bound(grid: GridSpec, diffusion: DiffusionSpec, generator: sp.csr_matrix) -> float:
    """Граница шага явной схемы: min(h^2/(2 a d), 1/max|L_pp|)"""
    diffusive = float(np.min(grid.widths) ** 2 / (2.0 * diffusion.a_max * grid.dim))
    diagonal = float(np.max(np.abs(generator.diagonal())))
    return min(diffusive, 1.0 / diagonal) if diagonal > 0 else diffusive


def check_confining(grid: GridSpec, drift: np.ndarray, mode: str = "error") -> bool:
    """
    Проверка удержания: в граничных ячейках снос не направлен наружу

    Returns:
        bool: True, если снос удерживает массу
    """
    drift = np.asarray(drift, dtype=float).reshape(grid.shape + (grid.dim,))
    worst = 0.0
    for k in range(grid.dim):
        lower = np.take(drift[..., k], 0, axis=k)
        upper = np.take(drift[..., k], grid.cells[k] - 1, axis=k)
        worst = max(worst, float(np.max(-lower)), float(np.max(upper)))
    if worst <= 0.0:
        return True
    message = f"Снос выводит массу через границу области (наружная компонента до {worst:.3e})"
    if mode == "error":
        raise NotConfining(message)
    logger.warning(message)
    return False


def _clean(values: np.ndarray) -> np.ndarray:
    """Контроль знака после шага: мелкие отрицательные значения обнуляются"""
    lowest = values.min()
    if lowest < 0:
        scale = max(values.max(), 0.0)
        if lowest < -NEGATIVITY_TOLERANCE * scale:
            raise NegativeDensity(f"Отрицательная плотность {lowest:.3e} при максимуме {scale:.3e}")
        values = np.where(values < 0, 0.0, values)
    return values


class LinearStepper:
    """
    Шаг по времени для фиксированного оператора L

    Неявный режим решает (I - dt L) rho_new = rho: в 1D ленточным
    решателем, в 2D через LU-разложение, вычисленное один раз.
    """

    def __init__(self, grid: GridSpec, drift: np.ndarray, diffusion: DiffusionSpec, dt: float,
                 scheme: str = "ChangCooper", stepping: str = "implicit"):
        self.grid = grid
        self.dt = float(dt)
        self.stepping = stepping
        self.generator = build_generator(grid, drift, diffusion, scheme)
        self._banded = None
        self._lu = None

        if stepping == "explicit":
            bound = explicit_stability_bound(grid, diffusion, self.generator)
            if self.dt > bound:
                raise StabilityViolation(f"dt={self.dt:.3e} превышает границу устойчивости {bound:.3e}")
            return

        system = (sp.identity(grid.size, format="csr") - self.dt * self.generator)
        if grid.dim == 1:
            n = grid.size
            banded = np.zeros((3, n))
            banded[0, 1:] = system.diagonal(1)
            banded[1] = system.diagonal(0)
            banded[2, :-1] = system.diagonal(-1)
            self._banded = banded
        else:
            self._lu = splu(system.tocsc())

    def step_values(self, values: np.ndarray) -> np.ndarray:
        flat = values.ravel()
        if self.stepping == "explicit":
            new = flat + self.dt * (self.generator @ flat)
        elif self._banded is not None:
            new = solve_banded((1, 1), self._banded, flat, check_finite=False)
        else:
            new = self._lu.solve(flat)
        return _clean(new).reshape(self.grid.shape)

    def step(self, density: DensityField) -> DensityField:
        return DensityField(self.grid, self.step_values(density.values))


def step_linear(rho: DensityField, drift: np.ndarray, diffusion: DiffusionSpec, dt: float,
                scheme: str = "ChangCooper", stepping: str = "implicit") -> DensityField:
    """
    Один консервативный шаг линейного уравнения

    Args:
        rho (DensityField): Текущая плотность
        drift (np.ndarray): Снос в центрах ячеек (size, dim)
        diffusion (DiffusionSpec): Диффузия
        dt (float): Шаг по времени
        scheme (str): Схема потоков
        stepping (str): implicit или explicit

    Returns:
        DensityField: Плотность после шага
    """
    return LinearStepper(rho.grid, drift, diffusion, dt, scheme, stepping).step(rho)


def warn_boundary_band(density: DensityField, label: str = "") -> float:
    """Предупреждение, если у границы заметная масса"""
    band = boundary_band_mass(density, BOUNDARY_BAND_CELLS)
    if band > BOUNDARY_BAND_WARNING:
        logger.warning(f"{label}масса в приграничной полосе {band:.3e} превышает {BOUNDARY_BAND_WARNING:.0e}")
    return band


def evolve_linear(rho0: DensityField, drift: np.ndarray, diffusion: DiffusionSpec, cfg: SolveConfig,
                  weight: Optional[WeightFunction] = None, functionals: Optional[Dict] = None) -> Trajectory:
    """
    Эволюция с замороженным сносом и записью траектории

    Returns:
        Trajectory: Снимки с шагом cfg.snapshot_stride и скалярные каналы на каждом шаге
    """
    check_confining(rho0.grid, drift, cfg.confinement)
    dt = cfg.dt or default_dt(rho0.grid, drift)
    dt, n_steps, snapshot_every = time_grid(cfg.T, dt, cfg.snapshot_stride)
    recorder = TrajectoryRecorder(rho0, weight, functionals, snapshot_every, n_steps)
    if n_steps == 0:
        return recorder.finish()
    stepper = LinearStepper(rho0.grid, drift, diffusion, dt, cfg.scheme, cfg.stepping)
    logger.info(f"Линейная эволюция: {n_steps} шагов dt={dt:.3e} до T={cfg.T}")
    current = rho0
    for n in range(1, n_steps + 1):
        current = stepper.step(current)
        recorder.record(n, n * dt, current)
    warn_boundary_band(current, "Линейная эволюция: ")
    return recorder.finish()


def _mass_row_solve(generator: sp.csr_matrix, grid: GridSpec) -> np.ndarray:
    system = generator.tolil(copy=True)
    pivot = 0
    system[pivot, :] = np.full(grid.size, grid.cell_volume)
    rhs = np.zeros(grid.size)
    rhs[pivot] = 1.0
    return spsolve(system.tocsc(), rhs)


def solve_linear_stationary(drift: np.ndarray, diffusion: DiffusionSpec, cfg: SolveConfig,
                            grid: GridSpec, weight: Optional[WeightFunction] = None,
                            guess: Optional[DensityField] = None) -> DensityField:
    """
    Вероятностное решение L* mu = 0 для замороженного сноса

    DirectNullSpace заменяет одну строку L строкой массы и решает
    разреженную систему; LongTime делает крупные неявные шаги, пока
    ||rho_new - rho||_W / dt не станет меньше допуска.
    """
    check_confining(grid, drift, cfg.confinement)
    generator = build_generator(grid, drift, diffusion, cfg.scheme)

    if cfg.stationary_mode == "DirectNullSpace":
        values = _mass_row_solve(generator, grid)
        values = _clean(values)
        result = normalize(DensityField(grid, values.reshape(grid.shape)))
        warn_boundary_band(result, "Стационарное решение: ")
        return result

    weight = weight or WeightFunction()
    current = guess.copy() if guess is not None else normalize(DensityField(grid, np.ones(grid.shape)))
    stepper = LinearStepper(grid, drift, diffusion, cfg.long_time_dt, cfg.scheme, "implicit")
    change = float("inf")
    for iteration in range(1, cfg.max_iterations + 1):
        new = normalize(stepper.step(current))
        change = weighted_tv(new, current, weight) / cfg.long_time_dt
        current = new
        if change < cfg.stationary_tol:
            logger.debug(f"LongTime сошелся за {iteration} шагов (изменение {change:.3e})")
            warn_boundary_band(current, "Стационарное решение: ")
            return current
    raise NoConvergence(
        f"LongTime не сошелся за {cfg.max_iterations} шагов (изменение {change:.3e})",
        history={"change": [change]}, iterations=cfg.max_iterations,
    )


def weak_form_residual(rho: DensityField, drift: np.ndarray, diffusion: DiffusionSpec,
                       phi: TestFunction, scheme: str = "ChangCooper") -> float:
    """
    |<L rho, phi> - <rho, L phi>|: дискретная проверка интегрального тождества

    L phi = sum_i a^ii d_ii phi + <b, grad phi> вычисляется точно.
    """
    grid = rho.grid
    drift = np.asarray(drift, dtype=float).reshape(grid.size, grid.dim)
    generator = build_generator(grid, drift, diffusion, scheme)
    centers = grid.centers
    phi_values = phi.value(centers)
    left = float(np.dot(generator @ rho.flat, phi_values) * grid.cell_volume)
    second = phi.hessian_diagonal(centers) @ np.asarray(diffusion.diagonal)
    L_phi = second + np.sum(drift * phi.gradient(centers), axis=1)
    right = float(np.dot(rho.flat, L_phi) * grid.cell_volume)
    return abs(left - right)


def mass_defect(before: DensityField, after: DensityField) -> float:
    """Относительное изменение массы за шаг"""
    return abs(after.mass - before.mass) / max(before.mass, MASS_TOLERANCE)
