"""
Отслеживание функционалов mu_t(psi) вдоль траекторий
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from measures.grid import DensityField
from measures.metrics import integrate_functional
from invariants.classifier import InvariantReport, I0, IPLUS
from solvers.trajectory import Trajectory
from utils.exceptions import EmptyTrajectory

logger = logging.getLogger(__name__)

CONSTANT_TOLERANCE = 1e-3


@dataclass
class FunctionalTrack:
    """Ряд mu_t(psi) и лучший из законов: константа или nu(psi) exp(lambda t)"""
    times: np.ndarray
    values: np.ndarray
    law: str
    rate: float
    initial: float
    relative_deviation: float

    def predicted(self) -> np.ndarray:
        if self.law == "constant":
            return np.full_like(self.times, self.initial)
        return self.initial * np.exp(self.rate * self.times)

    def to_dict(self) -> Dict:
        return {"law": self.law, "rate": self.rate, "initial": self.initial,
                "relative_deviation": self.relative_deviation}


def track_functional(trajectory: Trajectory, psi) -> FunctionalTrack:
    """
    Ряд mu_t(psi) по снимкам и подгонка закона

    Показатель lambda подгоняется при закрепленном nu(psi):
    lambda = sum t log(v/v0) / sum t^2.
    """
    if not trajectory.snapshots:
        raise EmptyTrajectory("Траектория не содержит снимков")
    times, values = trajectory.functional_series(psi)
    initial = float(values[0])
    scale = max(abs(initial), 1e-300)

    constant_dev = float(np.max(np.abs(values - initial)) / scale)
    rate = 0.0
    exponential_dev = float("inf")
    ratios = values / initial if initial != 0 else None
    if ratios is not None and np.all(ratios > 0) and np.dot(times, times) > 0:
        rate = float(np.dot(times, np.log(ratios)) / np.dot(times, times))
        predicted = initial * np.exp(rate * times)
        exponential_dev = float(np.max(np.abs(values - predicted) / np.abs(predicted)))

    if constant_dev <= max(CONSTANT_TOLERANCE, exponential_dev):
        track = FunctionalTrack(times, values, "constant", 0.0, initial, constant_dev)
    else:
        track = FunctionalTrack(times, values, "exponential", rate, initial, exponential_dev)
    logger.info(f"Функционал {getattr(psi, 'name', psi)}: закон {track.law}, "
                f"lambda={track.rate:.4f}, отклонение {track.relative_deviation:.2e}")
    return track


def nonconvergence_witness(nu: DensityField, mu: DensityField, basis: Sequence[InvariantReport],
                           tol: float = 1e-6) -> Optional[object]:
    """
    Первая функция, доказывающая, что mu_t не сходится к mu

    psi из I0 с |nu(psi) - mu(psi)| > tol или psi из I+ с |nu(psi)| > tol.
    Отсутствие свидетеля не доказывает сходимость.
    """
    for report in basis:
        psi = report.psi
        if report.classification == I0:
            gap = abs(integrate_functional(nu, psi) - integrate_functional(mu, psi))
            if gap > tol:
                logger.info(f"Свидетель несходимости: {psi.name} из I0, разность {gap:.3e}")
                return psi
        elif report.classification == IPLUS:
            value = abs(integrate_functional(nu, psi))
            if value > tol:
                logger.info(f"Свидетель несходимости: {psi.name} из I+, nu(psi)={value:.3e}")
                return psi
    return None
