"""
Траектория mu_t: снимки плотности и скалярные каналы
"""
import math
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config.settings import BLOWUP_FACTOR
from measures.grid import DensityField, GridSpec
from measures.weights import WeightFunction
from measures.metrics import integrate_functional, moment_V
from utils.exceptions import BlowUp, EmptyTrajectory
from utils.io_utils import write_density_csv, write_series_csv, padded_index

logger = logging.getLogger(__name__)


def time_grid(T: float, dt: float, stride: float) -> Tuple[float, int, int]:
    """
    Согласование шага с шагом снимков

    Returns:
        Tuple[float, int, int]: (dt, число шагов, шагов между снимками)
    """
    if T <= 0:
        return dt, 0, 1
    snapshot_every = max(1, math.ceil(stride / dt - 1e-9))
    dt = stride / snapshot_every
    n_steps = int(round(T / dt))
    if n_steps == 0 or abs(n_steps * dt - T) > 1e-9 * T:
        n_steps = max(1, math.ceil(T / dt))
        dt = T / n_steps
    return dt, n_steps, snapshot_every


@dataclass
class Trajectory:
    """Снимки mu_t с равномерным шагом и каналы, записанные на каждом шаге"""
    grid: GridSpec
    times: List[float] = field(default_factory=list)
    snapshots: List[DensityField] = field(default_factory=list)
    channel_times: List[float] = field(default_factory=list)
    channels: Dict[str, List[float]] = field(default_factory=dict)
    metadata: Dict = field(default_factory=dict)

    def __len__(self):
        return len(self.snapshots)

    def _require(self):
        if not self.snapshots:
            raise EmptyTrajectory("Траектория не содержит снимков")

    @property
    def nu(self) -> DensityField:
        self._require()
        return self.snapshots[0]

    @property
    def final(self) -> DensityField:
        self._require()
        return self.snapshots[-1]

    @property
    def horizon(self) -> float:
        self._require()
        return self.times[-1]

    def series(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """Канал, записанный на каждом шаге"""
        if name not in self.channels:
            raise KeyError(f"Канал '{name}' не записан (есть: {sorted(self.channels)})")
        return np.array(self.channel_times), np.array(self.channels[name])

    def functional_series(self, phi) -> Tuple[np.ndarray, np.ndarray]:
        """mu_t(phi) по снимкам"""
        self._require()
        values = [integrate_functional(s, phi) for s in self.snapshots]
        return np.array(self.times), np.array(values)

    def snapshot_at(self, t: float) -> DensityField:
        self._require()
        index = int(np.argmin(np.abs(np.array(self.times) - t)))
        return self.snapshots[index]

    def export(self, output_dir: str, densities: bool = True) -> List[str]:
        """
        Запись каналов (по CSV на канал) и снимков с нулями в индексе

        Returns:
            List[str]: Пути записанных файлов
        """
        written = []
        for name in sorted(self.channels):
            times, values = self.series(name)
            path = os.path.join(output_dir, f"channel_{name}.csv")
            written.append(write_series_csv(path, times, values, name))
        if densities:
            total = len(self.snapshots)
            for index, snapshot in enumerate(self.snapshots):
                path = os.path.join(output_dir, "snapshots", f"rho_{padded_index(index, total)}.csv")
                written.append(write_density_csv(snapshot, path))
            path = os.path.join(output_dir, "snapshots", "times.csv")
            written.append(write_series_csv(path, self.times, range(total), "index"))
        return written


def export_trajectory(trajectory: Trajectory, output_dir: str, densities: bool = True) -> List[str]:
    return trajectory.export(output_dir, densities)


class TrajectoryRecorder:
    """Запись каналов на каждом шаге и снимков через snapshot_every шагов"""

    def __init__(self, rho0: DensityField, weight: Optional[WeightFunction] = None,
                 functionals: Optional[Dict[str, Callable]] = None, snapshot_every: int = 1,
                 n_steps: int = 0):
        self.weight = weight or WeightFunction()
        self.functionals = dict(functionals or {})
        self.snapshot_every = snapshot_every
        self.n_steps = n_steps
        self.trajectory = Trajectory(grid=rho0.grid)
        self.trajectory.channels = {name: [] for name in ["mass", "moment_V"] + sorted(self.functionals)}
        self.initial_moment = None
        self.record(0, 0.0, rho0)

    def record(self, n: int, t: float, density: DensityField):
        traj = self.trajectory
        moment = moment_V(density, self.weight)
        traj.channel_times.append(t)
        traj.channels["mass"].append(density.mass)
        traj.channels["moment_V"].append(moment)
        for name, phi in self.functionals.items():
            traj.channels[name].append(integrate_functional(density, phi))
        if n % self.snapshot_every == 0 or n == self.n_steps:
            traj.times.append(t)
            traj.snapshots.append(density)

        if self.initial_moment is None:
            self.initial_moment = moment
        elif not np.isfinite(moment) or moment > BLOWUP_FACTOR * self.initial_moment:
            if traj.times[-1] != t:
                traj.times.append(t)
                traj.snapshots.append(density)
            traj.metadata["blowup_time"] = t
            raise BlowUp(
                f"Момент ∫V dmu_t = {moment:.3e} превысил {BLOWUP_FACTOR:.0e} x начальное "
                f"{self.initial_moment:.3e} при t={t:.3f}",
                trajectory=traj, time=t,
            )

    def finish(self) -> Trajectory:
        return self.trajectory
