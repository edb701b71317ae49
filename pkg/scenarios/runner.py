"""
Выполнение анализов сценария и запись артефактов
"""
import os
import json
import time
import hashlib
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import DATABASE_URL, FPKLAB_THREADS
from measures.grid import DensityField, make_gaussian, mean_vector, covariance
from drift.conditions import HConstants, check_h_conditions, default_test_measures, closed_form_constants
from invariants.classifier import check_membership
from invariants.functions import function_from_dict, constraint_values
from invariants.tracking import track_functional, nonconvergence_witness
from solvers.nonlinear_cauchy import evolve_nonlinear, picard_iterate, moment_bound_check
from solvers.stationary_fixed_point import (
    find_stationary, branch_sweep, branch_moment_bound, verify_under_flow, StationaryResult
)
from analysis.convergence import (
    decay_rate_fit, tv_decay_series, lyapunov_check, w1_series, w1_contraction_check
)
from particles.simulator import simulate_replicas, empirical_density, cross_validate
from drift.models import RvhModel
from scenarios.config import Scenario, DEPENDENCIES, load_scenario
from utils.exceptions import ConfigInvalid, BlowUp, NoConvergence, HypothesisViolated
from utils.io_utils import write_series_csv, write_density_csv, write_json
from utils.manifest import ArtifactManifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ANALYSIS = 2

AXIS_NAMES = ("x", "y")


def emit_series(output_dir: str, series: Optional[Dict[str, Tuple]] = None,
                densities: Optional[Dict[str, DensityField]] = None) -> List[str]:
    """
    Данные для графиков: ряды - двухколоночные CSV, плотности - CSV на сетке

    Args:
        output_dir (str): Каталог
        series (dict): name -> (times, values); файл name.csv
        densities (dict): name -> DensityField; файл name.csv

    Returns:
        List[str]: Пути записанных файлов
    """
    written = []
    for name, (times, values) in (series or {}).items():
        try:
            written.append(write_series_csv(os.path.join(output_dir, f"{name}.csv"), times, values, name))
        except OSError as e:
            raise OSError(f"Не удалось записать ряд {name} в {output_dir}: {e}") from e
    for name, density in (densities or {}).items():
        try:
            written.append(write_density_csv(density, os.path.join(output_dir, f"{name}.csv")))
        except OSError as e:
            raise OSError(f"Не удалось записать плотность {name} в {output_dir}: {e}") from e
    return written


def moment_series(snapshots: List[DensityField], times) -> Dict[str, Tuple]:
    """Ряды среднего и дисперсии по каждой координате"""
    dim = snapshots[0].grid.dim
    means = np.array([mean_vector(s) for s in snapshots])
    variances = np.array([np.diag(covariance(s)) for s in snapshots])
    series = {}
    for axis in range(dim):
        suffix = "" if dim == 1 else f"_{AXIS_NAMES[axis]}"
        series[f"mean{suffix}"] = (times, means[:, axis])
        series[f"variance{suffix}"] = (times, variances[:, axis])
    return series


def config_hash(config: Dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode("utf-8")).hexdigest()


def _q_label(Q: float) -> str:
    return f"Q{Q:+g}"


class ScenarioRunner:
    """Исполнитель анализов одного сценария"""

    def __init__(self, scenario: Scenario, db_manager=None, threads: int = FPKLAB_THREADS):
        """
        Args:
            scenario (Scenario): Проверенный сценарий
            db_manager (DatabaseManager, optional): Журнал запусков
            threads (int): Ширина пула для свипов и реплик
        """
        self.scenario = scenario
        self.db_manager = db_manager
        self.threads = threads
        self.model = scenario.model()
        self.nu = None
        self.trajectory = None
        self.stationary: Optional[StationaryResult] = None
        self.particle_runs = []
        self.manifest = ArtifactManifest(scenario.output_dir, scenario.to_dict())
        self.run_id = None

    def _path(self, *parts) -> str:
        return os.path.join(self.scenario.output_dir, *parts)

    def _initial(self) -> DensityField:
        if self.nu is None:
            self.nu = self.scenario.initial_density()
        return self.nu

    def _targets(self):
        """Значения ограничений начальной меры, если отображение T их сохраняет"""
        if not len(self.model.constraint_space()):
            return None
        return constraint_values(self._initial(), self.model.constraint_space().functions())

    # Анализы

    def evolve_job(self) -> Dict:
        """Нелинейная эволюция из начальной меры"""
        section = self.scenario.section("evolve")
        nu = self._initial()
        functionals = {
            entry.get("name") or f"psi_{i}": function_from_dict(entry, self.scenario.dim)
            for i, entry in enumerate(section.get("functionals", []))
        }
        try:
            if section.get("mode", "per-step") == "picard":
                trajectory = picard_iterate(nu, self.model, self.scenario.diffusion, self.scenario.solve,
                                            self.scenario.weight)
            else:
                trajectory = evolve_nonlinear(nu, self.model, self.scenario.diffusion, self.scenario.solve,
                                              self.scenario.weight, functionals)
        except BlowUp as e:
            # Частичная траектория сохраняется до момента роста
            if e.trajectory is not None:
                self._export_trajectory(e.trajectory, section)
            raise
        self.trajectory = trajectory
        summary = self._export_trajectory(trajectory, section)

        if section.get("moment_bound", False):
            targets = self._constraint_targets(nu)
            constants = closed_form_constants(self.model, self.scenario.weight, self.scenario.diffusion, targets)
            if constants is None:
                logger.warning("Для проверки оценки момента нет констант в замкнутой форме")
            else:
                report = moment_bound_check(trajectory, self.scenario.weight, constants.C, constants.Lambda,
                                            constants.delta)
                path = write_json(self._path("evolve", "moment_bound.json"), report.to_dict())
                self.manifest.add([path], "evolve")
                summary["moment_bound_min_margin"] = report.min_margin
        return {"status": "success", **summary}

    def _constraint_targets(self, density: DensityField):
        functions = self.model.h_functions()
        return constraint_values(density, functions) if functions else 0.0

    def _export_trajectory(self, trajectory, section: Dict) -> Dict:
        directory = self._path("evolve")
        written = trajectory.export(directory, densities=section.get("export_snapshots", True))
        written += emit_series(directory, moment_series(trajectory.snapshots, trajectory.times))
        self.manifest.add(written, "evolve")
        return {
            "snapshots": len(trajectory.snapshots),
            "horizon": trajectory.times[-1],
            "final_mean": mean_vector(trajectory.snapshots[-1]).tolist(),
            "picard_sweeps": trajectory.metadata.get("picard_sweeps"),
        }

    def stationary_job(self) -> Dict:
        """Неподвижная точка отображения T"""
        section = self.scenario.section("stationary")
        guess = self._initial()
        targets = section.get("targets", self._targets())
        try:
            result = find_stationary(
                self.model, self.scenario.diffusion, self.scenario.solve, guess, targets=targets,
                damping=float(section.get("damping", 1.0)), tol=float(section.get("tol", 1e-8)),
                max_iterations=int(section.get("max_iterations", 100)), weight=self.scenario.weight,
            )
        except NoConvergence as e:
            path = write_json(self._path("stationary_history.json"), {"error": str(e), "history": e.history})
            self.manifest.add([path], "stationary")
            raise
        self.stationary = result
        summary = result.summary()
        if "verify_T" in section:
            summary["flow_displacement"] = verify_under_flow(
                result, self.model, self.scenario.diffusion, self.scenario.solve,
                T=float(section["verify_T"]), weight=self.scenario.weight,
            )
        paths = [write_density_csv(result.density, self._path("stationary.csv")),
                 write_json(self._path("stationary.json"), {**summary, "history": result.history})]
        self.manifest.add(paths, "stationary")
        return {"status": "success", **summary}

    def branch_sweep_job(self) -> Dict:
        """Стационарные ветви для списка значений Q"""
        section = self.scenario.section("branch-sweep")
        Q_values = [float(q) for q in section["Q"]]
        results = branch_sweep(
            self.model, self.scenario.diffusion, self.scenario.solve, self.scenario.grid, Q_values,
            damping=float(section.get("damping", 1.0)), tol=float(section.get("tol", 1e-8)),
            max_iterations=int(section.get("max_iterations", 100)), weight=self.scenario.weight,
            threads=self.threads,
        )
        branches, written = {}, []
        for Q, result in zip(Q_values, results):
            label = _q_label(Q)
            entry = result.summary()
            if isinstance(self.model, RvhModel):
                entry["moment_bound"] = branch_moment_bound(self.model, self.scenario.diffusion, Q)
            branches[label] = entry
            written.append(write_density_csv(result.density, self._path("branches", f"stationary_{label}.csv")))
        written.append(write_json(self._path("branches", "branch_sweep.json"), branches))
        self.manifest.add(written, "branch-sweep")

        failed = [label for label, entry in branches.items() if not entry["converged"]]
        if failed:
            return {"status": "error", "error": f"Ветви не сошлись: {failed}", "branches": branches}
        return {"status": "success", "branches": list(branches)}

    def invariants_job(self) -> Dict:
        """Классификация пробных функций и их поведение вдоль траектории"""
        section = self.scenario.section("invariants")
        kernel = self.model.interaction_kernel()
        reports = []
        for entry in section["functions"]:
            psi = function_from_dict(entry, self.scenario.dim)
            reports.append(check_membership(
                psi, kernel, candidate_lambda=entry.get("lambda"),
                samples=int(section.get("samples", 1000)), seed=self.scenario.seed,
                diffusion=self.scenario.diffusion, weight=self.scenario.weight,
            ))
        data = {"functions": [r.to_dict() for r in reports]}
        if self.trajectory is not None:
            data["tracks"] = {r.psi.name: track_functional(self.trajectory, r.psi).to_dict() for r in reports}
        if self.stationary is not None:
            witness = nonconvergence_witness(self._initial(), self.stationary.density, reports)
            data["witness"] = witness.name if witness is not None else None
        path = write_json(self._path("invariants.json"), data)
        self.manifest.add([path], "invariants")
        return {"status": "success", "classes": {r.psi.name: r.classification for r in reports}}

    def conditions_job(self) -> Dict:
        """Проверка условий на снос и неравенства Ляпунова"""
        section = self.scenario.section("conditions")
        targets = section.get("targets")
        if targets is None and self.model.h_functions():
            targets = self._constraint_targets(self._initial())
        measures = default_test_measures(self.model, self.scenario.grid, count=int(section.get("measures", 10)),
                                         seed=self.scenario.seed, targets=targets)
        constants = None
        if "constants" in section:
            c = section["constants"]
            constants = HConstants(C=float(c["C"]), Lambda=float(c["Lambda"]), delta=float(c.get("delta", 0.0)),
                                   N1=float(c["N1"]), N2=float(c["N2"]))
        report = check_h_conditions(
            self.model, self.scenario.weight, measures, self.scenario.diffusion,
            sample_points=int(section.get("samples", 10000)), constants=constants,
            auto_fit=bool(section.get("auto_fit", False)), targets=targets, seed=self.scenario.seed,
        )
        lyapunov = lyapunov_check(self.model, self.scenario.weight, report.C1, report.C2, measures,
                                  self.scenario.diffusion, samples=int(section.get("samples", 10000)),
                                  targets=targets, seed=self.scenario.seed)
        path = write_json(self._path("conditions.json"), {**report.to_dict(), "lyapunov": lyapunov.to_dict()})
        self.manifest.add([path], "conditions")
        return {"status": "success", "violations": report.violations, "margins": report.margins}

    def decay_fit_job(self) -> Dict:
        """Подгонка экспоненциальной скорости по ряду расстояний"""
        section = self.scenario.section("decay-fit")
        series = section.get("series", "tv")
        if series == "tv":
            if section.get("reference", "stationary") == "stationary":
                reference = self.stationary.density
            else:
                reference = make_gaussian(self.scenario.grid, section["mean"], section["variance"])
            times, values = tv_decay_series(self.trajectory, reference, self.scenario.weight)
            name = "tv_decay"
        else:
            axis = int(section.get("axis", 0))
            target = float(section.get("target", 0.0))
            times = np.array(self.trajectory.times)
            values = np.array([abs(mean_vector(s)[axis] - target) for s in self.trajectory.snapshots])
            name = "mean_decay"
        written = emit_series(self.scenario.output_dir, {name: (times, values)})
        window = section.get("window")
        fit = decay_rate_fit(times, values, tuple(window) if window is not None else None)
        written.append(write_json(self._path("decay_fit.json"), {"series": series, **fit.to_dict()}))
        self.manifest.add(written, "decay-fit")
        return {"status": "success", "alpha2": fit.alpha2, "r2": fit.r2}

    def w1_check_job(self) -> Dict:
        """Сжатие в метрике Канторовича"""
        kappa = self.model.monotonicity_constant()
        C_lip = self.model.w1_lipschitz_constant()
        times, distances = w1_series(self.trajectory, self.stationary.density)
        written = emit_series(self.scenario.output_dir, {"w1": (times, distances)})
        self.manifest.add(written, "w1-check")
        try:
            report = w1_contraction_check(self.trajectory, self.stationary.density, kappa, C_lip)
        except HypothesisViolated:
            path = write_json(self._path("w1_check.json"), {"kappa": kappa, "C": C_lip, "hypothesis": False})
            self.manifest.add([path], "w1-check")
            raise
        path = write_json(self._path("w1_check.json"), {"kappa": kappa, "C": C_lip, "hypothesis": True,
                                                        **report.to_dict()})
        self.manifest.add([path], "w1-check")
        return {"status": "success", "rate": report.rate, "min_margin": report.min_margin}

    def particles_job(self) -> Dict:
        """Реплики системы частиц"""
        section = self.scenario.section("particles")
        seeds = [int(s) for s in section.get("seeds", [self.scenario.seed])]
        self.particle_runs = simulate_replicas(
            self.scenario.initial_sampler(), self.model, self.scenario.diffusion, int(section["N"]),
            float(section["dt"]), float(section.get("T", self.scenario.solve.T)), seeds,
            stride=float(section.get("stride", self.scenario.solve.snapshot_stride)), threads=self.threads,
        )
        written = []
        for run in self.particle_runs:
            directory = self._path("particles", f"seed_{run.seed}")
            written += run.export(directory, all_snapshots=bool(section.get("all_snapshots", False)))
            density = empirical_density(run.snapshots[-1], self.scenario.grid,
                                        smooth=bool(section.get("smooth", True)))
            written.append(write_density_csv(density, os.path.join(directory, "empirical_final.csv")))
        self.manifest.add(written, "particles")
        diverged = [run.seed for run in self.particle_runs if run.diverged_at is not None]
        return {"status": "success", "seeds": seeds, "diverged": diverged}

    def cross_validate_job(self) -> Dict:
        """Сверка частиц с сеточным решением"""
        section = self.scenario.section("cross-validate")
        functionals = {name: name for name in section.get("functionals", ["mean", "variance"])}
        reports = {}
        for run in self.particle_runs:
            reports[f"seed_{run.seed}"] = cross_validate(run, self.trajectory, functionals).to_dict()
        path = write_json(self._path("cross_validate.json"), reports)
        self.manifest.add([path], "cross-validate")
        passed = all(r["passed"] for r in reports.values())
        return {"status": "success", "passed": passed}

    JOBS = {
        "evolve": evolve_job,
        "stationary": stationary_job,
        "branch-sweep": branch_sweep_job,
        "invariants": invariants_job,
        "conditions": conditions_job,
        "decay-fit": decay_fit_job,
        "w1-check": w1_check_job,
        "particles": particles_job,
        "cross-validate": cross_validate_job,
    }

    def _run_job(self, analysis: str) -> Dict:
        logger.info(f"Запуск анализа '{analysis}'")
        started = time.monotonic()
        try:
            result = self.JOBS[analysis](self)
            if result.get("status") == "error":
                logger.error(f"Анализ '{analysis}' завершился с ошибкой: {result.get('error')}")
            else:
                logger.info(f"Анализ '{analysis}' завершен")
        except Exception as e:
            logger.error(f"Ошибка при выполнении анализа '{analysis}': {str(e)}")
            result = {"status": "error", "error": f"{type(e).__name__}: {str(e)}"}
        self._ledger("record_analysis", self.run_id, analysis, result["status"],
                     duration=time.monotonic() - started, summary=result)
        return result

    def _ledger(self, method: str, *args, **kwargs):
        """Запись в журнал; сбой журнала не влияет на результат запуска"""
        if self.db_manager is None or (method != "start_run" and self.run_id is None):
            return None
        try:
            return getattr(self.db_manager, method)(*args, **kwargs)
        except Exception as e:
            logger.error(f"Журнал запусков недоступен ({method}): {str(e)}")
            return None

    def run(self) -> int:
        """
        Выполнение анализов в порядке зависимостей

        Returns:
            int: 0 - успех, 2 - сбой хотя бы одного анализа
        """
        scenario = self.scenario
        self.run_id = self._ledger("start_run", scenario.name, config_hash(self.manifest.config),
                                   scenario.output_dir)
        order = scenario.execution_order()
        implied = [a for a in order if a not in scenario.analyses]
        if implied:
            logger.info(f"Добавлены зависимые анализы: {implied}")

        failed = set()
        for analysis in order:
            blocked = [d for d in self._requirements(analysis) if d in failed]
            if blocked:
                status = {"status": "skipped", "error": f"не выполнены зависимости {blocked}"}
                logger.warning(f"Анализ '{analysis}' пропущен: {status['error']}")
            else:
                status = self._run_job(analysis)
            self.manifest.record(analysis, status)
            if status["status"] != "success":
                failed.add(analysis)

        exit_code = EXIT_ANALYSIS if failed else EXIT_OK
        self.manifest.write(exit_code)
        self._ledger("record_artifacts", self.run_id, self.manifest.entries())
        self._ledger("finish_run", self.run_id, "failed" if failed else "success", exit_code)
        logger.info(f"Сценарий '{scenario.name}' завершен с кодом {exit_code}")
        return exit_code

    def _requirements(self, analysis: str) -> Tuple[str, ...]:
        required = DEPENDENCIES.get(analysis, ())
        if analysis == "decay-fit" and "stationary" in self.scenario.execution_order():
            decay = self.scenario.section("decay-fit")
            if decay.get("series", "tv") == "tv" and decay.get("reference", "stationary") == "stationary":
                required = required + ("stationary",)
        return required


def run_scenario(path: str, output_dir: Optional[str] = None, db_url: Optional[str] = None,
                 threads: int = FPKLAB_THREADS) -> int:
    """
    Загрузка сценария и выполнение всех анализов

    Args:
        path (str): Путь к TOML-файлу сценария
        output_dir (str, optional): Каталог результатов вместо указанного в сценарии
        db_url (str, optional): URL журнала запусков (по умолчанию FPKLAB_DATABASE_URL)
        threads (int): Ширина пула потоков

    Returns:
        int: Код выхода 0/1/2
    """
    try:
        scenario = load_scenario(path)
    except ConfigInvalid as e:
        logger.error(f"Некорректный сценарий: {str(e)}")
        return EXIT_CONFIG
    if output_dir:
        scenario.output_dir = output_dir

    db_manager = None
    db_url = db_url if db_url is not None else DATABASE_URL
    if db_url:
        from database.db_manager import DatabaseManager
        try:
            db_manager = DatabaseManager(db_url)
        except Exception as e:
            logger.error(f"Не удалось открыть журнал запусков {db_url}: {str(e)}")

    try:
        runner = ScenarioRunner(scenario, db_manager, threads)
    except OSError as e:
        logger.error(f"Каталог результатов недоступен: {str(e)}")
        return EXIT_CONFIG
    return runner.run()
