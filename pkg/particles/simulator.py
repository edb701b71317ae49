"""
Система взаимодействующих частиц Маккина-Власова

dX_i = b(X_i, mu^N_t) dt + sqrt(2 a) dB_i, mu^N_t = (1/N) sum delta(X_j).
Закон X_t решает то же уравнение ∂_t mu = a Δmu - div(b mu), что и сеточный решатель.
"""
import os
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from config.settings import FPKLAB_THREADS, MIN_PARTICLES, SNAPSHOT_STRIDE, DEFAULT_SEED
from measures.grid import DensityField, GridSpec, normalize, mean_vector, covariance, point_array
from measures.metrics import integrate_functional
from measures.weights import DiffusionSpec
from drift.models import DriftModel
from solvers.trajectory import Trajectory, time_grid
from utils.exceptions import TimeGridMismatch
from utils.io_utils import write_ensemble_csv, write_series_csv, write_json, padded_index

logger = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, int], np.ndarray]

Z_FLAG = 3.0
TIME_TOLERANCE = 1e-9


@dataclass
class ParticleEnsemble:
    """Позиции N частиц в момент time"""
    positions: np.ndarray
    seed: int = DEFAULT_SEED
    time: float = 0.0

    def __post_init__(self):
        self.positions = point_array(self.positions)
        if self.positions.shape[0] < MIN_PARTICLES:
            raise ValueError(f"Нужно не меньше {MIN_PARTICLES} частиц, получено {self.positions.shape[0]}")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("Позиции частиц должны быть конечными")

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass
class ParticleRun:
    """Снимки ансамбля на сетке времени с шагом snapshot_stride"""
    times: List[float] = field(default_factory=list)
    snapshots: List[np.ndarray] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    diverged_at: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    @property
    def final(self) -> ParticleEnsemble:
        return ParticleEnsemble(self.snapshots[-1], self.seed, self.times[-1])

    def estimate(self, functional) -> tuple:
        """
        Выборочное среднее функционала по снимкам и его стандартная ошибка

        Returns:
            Tuple[np.ndarray, np.ndarray]: (оценки, стандартные ошибки)
        """
        estimates, errors = [], []
        for positions in self.snapshots:
            value, error = _particle_statistic(positions, functional)
            estimates.append(value)
            errors.append(error)
        return np.array(estimates), np.array(errors)

    def export(self, output_dir: str, all_snapshots: bool = False) -> List[str]:
        """Снимки "id,x[,y]" (по умолчанию только последний) и ряды среднего и дисперсии"""
        written = []
        total = len(self.snapshots)
        indices = range(total) if all_snapshots else [total - 1]
        for index in indices:
            path = os.path.join(output_dir, f"ensemble_{padded_index(index, total)}.csv")
            written.append(write_ensemble_csv(path, self.snapshots[index]))
        for name in ("mean", "variance"):
            values, _ = self.estimate(name)
            written.append(write_series_csv(os.path.join(output_dir, f"particle_{name}.csv"),
                                            self.times, values, name))
        written.append(write_json(os.path.join(output_dir, "particles.json"), {
            "seed": self.seed, "diverged_at": self.diverged_at, **self.metadata,
        }))
        return written


def gaussian_sampler(mean, variance) -> Sampler:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.sqrt(np.broadcast_to(np.asarray(variance, dtype=float), mean.shape))

    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        return mean + std * rng.standard_normal((count, mean.size))
    return sample


def mixture_sampler(weights: Sequence[float], means, variances) -> Sampler:
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    components = [gaussian_sampler(m, v) for m, v in zip(means, variances)]

    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        labels = rng.choice(len(components), size=count, p=weights)
        draws = np.stack([c(rng, count) for c in components])
        return draws[labels, np.arange(count)]
    return sample


def uniform_sampler(lower, upper) -> Sampler:
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))

    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(lower, upper, size=(count, lower.size))
    return sample


def point_sampler(point) -> Sampler:
    point = np.atleast_1d(np.asarray(point, dtype=float))

    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        return np.tile(point, (count, 1))
    return sample


def simulate(sampler: Union[Sampler, np.ndarray], model: DriftModel, diffusion: DiffusionSpec, N: int,
             dt: float, T: float, seed: int = DEFAULT_SEED, stride: float = SNAPSHOT_STRIDE,
             noise: Optional[np.ndarray] = None) -> ParticleRun:
    """
    Схема Эйлера-Маруямы для системы частиц

    Args:
        sampler: Генератор начальных позиций (rng, N) -> (N, d) или готовый массив позиций
        model (DriftModel): Модель сноса; мера - эмпирическая мера ансамбля
        diffusion (DiffusionSpec): Диагональная диффузия a
        N (int): Число частиц
        dt (float): Шаг по времени (согласуется с шагом снимков)
        T (float): Горизонт
        seed (int): Зерно генератора
        stride (float): Шаг между снимками
        noise (np.ndarray, optional): Готовые стандартные нормальные приращения (шаги, N, d)

    Returns:
        ParticleRun: Снимки ансамбля; при расходимости - до момента расходимости
    """
    rng = np.random.default_rng(seed)
    initial = sampler if isinstance(sampler, np.ndarray) else sampler(rng, N)
    ensemble = ParticleEnsemble(initial, seed)
    if ensemble.size != N:
        raise ValueError(f"Начальный ансамбль содержит {ensemble.size} частиц вместо {N}")
    if ensemble.dim != model.dim:
        raise ValueError(f"Размерность частиц {ensemble.dim} не совпадает с моделью ({model.dim})")

    dt, n_steps, snapshot_every = time_grid(T, dt, stride)
    if noise is not None and noise.shape != (n_steps, N, model.dim):
        raise ValueError(f"Форма шума {noise.shape} не совпадает с ({n_steps}, {N}, {model.dim})")
    amplitude = np.sqrt(2.0 * np.asarray(diffusion.diagonal) * dt)

    run = ParticleRun(seed=seed, metadata={"N": N, "dt": dt, "steps": n_steps, "model": model.to_dict()})
    positions = ensemble.positions.copy()
    run.times.append(0.0)
    run.snapshots.append(positions.copy())
    logger.info(f"Частицы {model}: N={N}, {n_steps} шагов dt={dt:.3e}, seed={seed}")

    for n in range(1, n_steps + 1):
        increments = noise[n - 1] if noise is not None else rng.standard_normal((N, model.dim))
        positions = positions + model.evaluate_empirical(positions) * dt + amplitude * increments
        t = n * dt
        if not np.all(np.isfinite(positions)):
            run.diverged_at = t
            logger.warning(f"Ансамбль разошелся при t={t:.3f}, запись остановлена")
            break
        if n % snapshot_every == 0 or n == n_steps:
            run.times.append(t)
            run.snapshots.append(positions.copy())
    return run


def simulate_replicas(sampler: Sampler, model: DriftModel, diffusion: DiffusionSpec, N: int, dt: float,
                      T: float, seeds: Sequence[int], stride: float = SNAPSHOT_STRIDE,
                      threads: int = FPKLAB_THREADS) -> List[ParticleRun]:
    """Независимые реплики с разными зернами в пуле потоков"""
    def run(seed):
        return simulate(sampler, model, diffusion, N, dt, T, seed=seed, stride=stride)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, seeds))


def count_out_of_box(positions, grid: GridSpec) -> int:
    return int(np.sum(~grid.contains(point_array(positions))))


def silverman_bandwidth(positions: np.ndarray) -> np.ndarray:
    """Ширина окна по правилу Сильвермана для каждой координаты"""
    count, dim = positions.shape
    std = np.std(positions, axis=0, ddof=1) if count > 1 else np.zeros(dim)
    return std * (4.0 / (dim + 2.0)) ** (1.0 / (dim + 4.0)) * count ** (-1.0 / (dim + 4.0))


def empirical_density(positions, grid: GridSpec, smooth: bool = False) -> DensityField:
    """
    Гистограмма ансамбля на сетке, нормированная на массу частиц в области

    Args:
        positions: Позиции частиц (N, d) или ParticleEnsemble
        grid (GridSpec): Сетка
        smooth (bool): Сглаживание гауссовым фильтром с шириной по Сильверману

    Returns:
        DensityField: Вероятностная плотность
    """
    if isinstance(positions, ParticleEnsemble):
        positions = positions.positions
    positions = point_array(positions)
    outside = count_out_of_box(positions, grid)
    if outside:
        logger.warning(f"{outside} из {positions.shape[0]} частиц вне области {grid.describe()}")

    edges = [grid.axis_edges(axis) for axis in range(grid.dim)]
    counts, _ = np.histogramdd(positions, bins=edges)
    values = counts / grid.cell_volume
    if smooth:
        sigma_cells = silverman_bandwidth(positions) / grid.widths
        if np.all(sigma_cells > 0):
            values = gaussian_filter(values, sigma=sigma_cells, mode="constant")
    return normalize(DensityField(grid, values))


def _particle_statistic(positions: np.ndarray, functional):
    """Оценка функционала по ансамблю и ее стандартная ошибка"""
    count = positions.shape[0]
    name, axis = _parse_functional(functional)
    if name == "mean":
        samples = positions[:, axis]
    elif name == "variance":
        centered = positions[:, axis] - positions[:, axis].mean()
        samples = centered ** 2 * count / (count - 1)
    else:
        samples = np.asarray(functional(positions), dtype=float)
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(count))


def _parse_functional(functional):
    if isinstance(functional, str):
        name, _, axis = functional.partition(":")
        if name not in ("mean", "variance"):
            raise ValueError(f"Неизвестный функционал '{functional}'")
        return name, int(axis or 0)
    return None, 0


def _pde_statistic(density: DensityField, functional) -> float:
    name, axis = _parse_functional(functional)
    if name == "mean":
        return float(mean_vector(density)[axis])
    if name == "variance":
        return float(covariance(density)[axis, axis])
    return integrate_functional(density, functional)


@dataclass
class CrossValidationReport:
    times: np.ndarray
    z_scores: Dict[str, np.ndarray]
    particle: Dict[str, np.ndarray]
    pde: Dict[str, np.ndarray]

    @property
    def flags(self) -> Dict[str, List[float]]:
        """Моменты времени с z > 3 по каждому функционалу"""
        return {name: self.times[z > Z_FLAG].tolist() for name, z in self.z_scores.items()}

    @property
    def passed(self) -> bool:
        return not any(self.flags.values())

    def to_dict(self) -> Dict:
        return {"times": self.times, "z_scores": self.z_scores, "flags": self.flags, "passed": self.passed}


def cross_validate(run: ParticleRun, trajectory: Trajectory, functionals: Dict[str, object]) -> CrossValidationReport:
    """
    |оценка по частицам - значение сеточного решения| / стандартная ошибка

    Args:
        run (ParticleRun): Снимки ансамбля
        trajectory (Trajectory): Траектория сеточного решателя
        functionals (dict): name -> "mean[:k]", "variance[:k]" или функция точек

    Raises:
        TimeGridMismatch: если моменты снимков не совпадают
    """
    times = np.array(run.times)
    reference = np.array(trajectory.times)
    if times.shape != reference.shape or not np.allclose(times, reference, atol=TIME_TOLERANCE):
        raise TimeGridMismatch(
            f"Снимки частиц ({len(times)} шт., до t={times[-1]:.3f}) и траектории "
            f"({len(reference)} шт., до t={reference[-1] if reference.size else float('nan'):.3f}) не совпадают"
        )

    z_scores, particle, pde = {}, {}, {}
    for name, functional in functionals.items():
        estimates, errors = run.estimate(functional)
        exact = np.array([_pde_statistic(s, functional) for s in trajectory.snapshots])
        gap = np.abs(estimates - exact)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(errors > 0, gap / errors, np.where(gap > 1e-12, np.inf, 0.0))
        z_scores[name], particle[name], pde[name] = z, estimates, exact

    report = CrossValidationReport(times, z_scores, particle, pde)
    for name, flagged in report.flags.items():
        if flagged:
            logger.warning(f"Расхождение частиц и сетки по '{name}' в {len(flagged)} моментах")
    logger.info(f"Сверка частиц и сетки: {'согласованы' if report.passed else 'есть расхождения'}")
    return report
