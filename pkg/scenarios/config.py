"""
Сценарии: разбор и проверка TOML-файлов

Файл сценария содержит секции [grid] [weight] [diffusion] [drift] [initial]
[solve] и по одной необязательной секции на каждый анализ из списка analyses.
"""
import os
import re
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from config.settings import OUTPUT_DIR, DEFAULT_SEED
from measures.grid import GridSpec, DensityField, make_gaussian, make_mixture, make_uniform
from measures.weights import WeightFunction, DiffusionSpec
from drift.models import DriftModel, model_from_dict
from invariants.functions import function_from_dict
from particles.simulator import gaussian_sampler, mixture_sampler, uniform_sampler
from solvers.linear_solver import SolveConfig
from utils.exceptions import ConfigInvalid

logger = logging.getLogger(__name__)

# Порядок выполнения анализов
ANALYSES = (
    "evolve", "stationary", "branch-sweep", "invariants", "conditions",
    "decay-fit", "w1-check", "particles", "cross-validate",
)

# Анализы, результаты которых нужны другим анализам
DEPENDENCIES = {
    "decay-fit": ("evolve",),
    "w1-check": ("evolve", "stationary"),
    "cross-validate": ("evolve", "particles"),
}

INITIAL_KINDS = ("gaussian", "mixture", "uniform")
DECAY_SERIES = ("tv", "mean")
DECAY_REFERENCES = ("stationary", "gaussian")
EVOLVE_MODES = ("per-step", "picard")

REQUIRED_SECTIONS = ("grid", "drift", "initial")

_TOML_POSITION = re.compile(r"line (\d+)")


def _find_line(text: Optional[str], section: Optional[str], key: Optional[str] = None) -> Optional[int]:
    """Номер строки ключа key в секции section (или самой секции)"""
    if not text:
        return None
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("["):
            current = line.strip("[]").strip().strip('"')
            if key is None and current == section:
                return number
            continue
        if key is not None and current == section and re.match(rf'^"?{re.escape(key)}"?\s*=', line):
            return number
    return None


@dataclass
class Scenario:
    """Полное описание численного эксперимента"""
    name: str
    grid: GridSpec
    weight: WeightFunction
    diffusion: DiffusionSpec
    drift: Dict
    initial: Dict
    solve: SolveConfig
    analyses: List[str] = field(default_factory=list)
    sections: Dict[str, Dict] = field(default_factory=dict)
    output_dir: str = OUTPUT_DIR
    seed: int = DEFAULT_SEED

    @property
    def dim(self) -> int:
        return self.grid.dim

    def model(self) -> DriftModel:
        return model_from_dict(self.drift, self.dim)

    def section(self, analysis: str) -> Dict:
        return dict(self.sections.get(analysis, {}))

    def execution_order(self) -> List[str]:
        """Запрошенные анализы и их зависимости в порядке ANALYSES"""
        needed = set(self.analyses)
        for analysis in self.analyses:
            needed.update(DEPENDENCIES.get(analysis, ()))
            if analysis == "decay-fit":
                decay = self.section("decay-fit")
                if decay.get("series", "tv") == "tv" and decay.get("reference", "stationary") == "stationary":
                    needed.add("stationary")
        return [a for a in ANALYSES if a in needed]

    def initial_density(self) -> DensityField:
        data = self.initial
        kind = data["kind"]
        if kind == "gaussian":
            return make_gaussian(self.grid, data["mean"], data["variance"])
        if kind == "mixture":
            return make_mixture(self.grid, data["weights"], data["means"], data["variances"])
        return make_uniform(self.grid, data["lower"], data["upper"])

    def initial_sampler(self):
        data = self.initial
        kind = data["kind"]
        if kind == "gaussian":
            return gaussian_sampler(data["mean"], data["variance"])
        if kind == "mixture":
            return mixture_sampler(data["weights"], data["means"], data["variances"])
        return uniform_sampler(data["lower"], data["upper"])

    def to_dict(self) -> Dict:
        """Словарь, повторно разбираемый from_dict в равный сценарий"""
        solve = {k: v for k, v in self.solve.to_dict().items() if v is not None}
        data = {
            "name": self.name,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "analyses": list(self.analyses),
            "grid": {"lower": list(self.grid.lower), "upper": list(self.grid.upper),
                     "cells": list(self.grid.cells)},
            "weight": {"m": self.weight.m, "gamma": self.weight.gamma},
            "diffusion": {"a": list(self.diffusion.diagonal)},
            "drift": self.drift,
            "initial": self.initial,
            "solve": solve,
        }
        data.update(self.sections)
        return data

    @classmethod
    def from_dict(cls, data: Dict, text: Optional[str] = None, source: str = "<dict>") -> "Scenario":
        """
        Сборка и проверка сценария

        Args:
            data (dict): Разобранный TOML или эхо конфигурации из манифеста
            text (str, optional): Исходный текст для указания строк в ошибках
            source (str): Имя источника для сообщений

        Returns:
            Scenario: Проверенный сценарий

        Raises:
            ConfigInvalid: с полем и номером строки
        """
        def fail(message, section=None, key=None):
            dotted = ".".join(p for p in (section, key) if p)
            raise ConfigInvalid(f"{source}: {message}", field=dotted or None,
                                line=_find_line(text, section, key))

        for section in REQUIRED_SECTIONS:
            if not isinstance(data.get(section), dict):
                fail(f"отсутствует секция [{section}]", section)

        grid_data = data["grid"]
        for key in ("lower", "upper", "cells"):
            if key not in grid_data:
                fail("обязательное поле", "grid", key)
        try:
            grid = GridSpec.create(grid_data["lower"], grid_data["upper"], grid_data["cells"])
        except (ValueError, TypeError) as e:
            fail(str(e), "grid")

        weight_data = data.get("weight", {})
        try:
            weight = WeightFunction(m=float(weight_data.get("m", 1.0)),
                                    gamma=float(weight_data.get("gamma", 0.5)))
        except (ValueError, TypeError) as e:
            fail(str(e), "weight")

        try:
            diffusion = DiffusionSpec.create(data.get("diffusion", {}).get("a", 1.0), grid.dim)
        except (ValueError, TypeError) as e:
            fail(str(e), "diffusion", "a")

        drift = dict(data["drift"])
        if "variant" not in drift:
            fail("обязательное поле", "drift", "variant")
        try:
            model_from_dict(drift, grid.dim)
        except (ValueError, TypeError, KeyError) as e:
            fail(f"некорректная модель сноса: {e}", "drift")

        initial = dict(data["initial"])
        cls._check_initial(initial, grid, fail)

        solve_data = dict(data.get("solve", {}))
        known = {f.name for f in fields(SolveConfig)}
        for key in solve_data:
            if key not in known:
                fail(f"неизвестный параметр, допустимы {sorted(known)}", "solve", key)
        try:
            solve = SolveConfig(**solve_data)
        except (ValueError, TypeError) as e:
            fail(str(e), "solve")

        analyses = list(data.get("analyses", []))
        for analysis in analyses:
            if analysis not in ANALYSES:
                fail(f"неизвестный анализ '{analysis}', допустимы {list(ANALYSES)}", None, "analyses")
        sections = {a: dict(data[a]) for a in ANALYSES if isinstance(data.get(a), dict)}

        scenario = cls(
            name=str(data.get("name", os.path.splitext(os.path.basename(source))[0])),
            grid=grid, weight=weight, diffusion=diffusion, drift=drift, initial=initial,
            solve=solve, analyses=analyses, sections=sections,
            output_dir=str(data.get("output_dir", os.path.join(OUTPUT_DIR, str(data.get("name", "scenario"))))),
            seed=int(data.get("seed", DEFAULT_SEED)),
        )
        cls._check_analyses(scenario, fail)
        return scenario

    @staticmethod
    def _check_initial(initial: Dict, grid: GridSpec, fail):
        kind = initial.get("kind")
        if kind not in INITIAL_KINDS:
            fail(f"вид начального условия должен быть одним из {INITIAL_KINDS}", "initial", "kind")
        required = {
            "gaussian": ("mean", "variance"),
            "mixture": ("weights", "means", "variances"),
            "uniform": ("lower", "upper"),
        }[kind]
        for key in required:
            if key not in initial:
                fail("обязательное поле", "initial", key)
        if kind == "mixture":
            sizes = {len(initial[key]) for key in required}
            if len(sizes) != 1:
                fail("weights, means и variances должны иметь одинаковую длину", "initial", "weights")

    @staticmethod
    def _check_analyses(scenario: "Scenario", fail):
        """Параметры, без которых анализ не может быть выполнен"""
        model = scenario.model()
        order = scenario.execution_order()

        if "stationary" in order:
            targets = scenario.section("stationary").get("targets")
            if targets is not None and len(np.atleast_1d(targets)) != len(model.h_functions()):
                fail(f"нужно {len(model.h_functions())} значений ограничений", "stationary", "targets")

        if "branch-sweep" in order:
            sweep = scenario.section("branch-sweep")
            if not sweep.get("Q"):
                fail("список значений Q обязателен", "branch-sweep", "Q")
            if len(model.h_functions()) != 1:
                fail("свип по Q требует модели с одной функцией ограничения", "branch-sweep")

        if "invariants" in order:
            functions = scenario.section("invariants").get("functions")
            if not functions:
                fail("список пробных функций обязателен", "invariants", "functions")
            for entry in functions:
                try:
                    function_from_dict(entry, scenario.dim)
                except (ValueError, TypeError, KeyError) as e:
                    fail(f"некорректная пробная функция {entry}: {e}", "invariants", "functions")

        if "evolve" in order:
            mode = scenario.section("evolve").get("mode", "per-step")
            if mode not in EVOLVE_MODES:
                fail(f"режим должен быть одним из {EVOLVE_MODES}", "evolve", "mode")

        if "decay-fit" in order:
            decay = scenario.section("decay-fit")
            series = decay.get("series", "tv")
            if series not in DECAY_SERIES:
                fail(f"ряд должен быть одним из {DECAY_SERIES}", "decay-fit", "series")
            reference = decay.get("reference", "stationary")
            if series == "tv" and reference not in DECAY_REFERENCES:
                fail(f"опорная мера должна быть одной из {DECAY_REFERENCES}", "decay-fit", "reference")
            if series == "tv" and reference == "gaussian":
                for key in ("mean", "variance"):
                    if key not in decay:
                        fail("обязательное поле для гауссовской опорной меры", "decay-fit", key)
            window = decay.get("window")
            if window is not None and (len(window) != 2 or window[0] >= window[1]):
                fail("окно задается как [t_lo, t_hi] с t_lo < t_hi", "decay-fit", "window")

        if "w1-check" in order and scenario.dim != 1:
            fail("W1 поддерживается только в размерности 1", "w1-check")

        if "particles" in order:
            particles = scenario.section("particles")
            if int(particles.get("N", 0)) < 100:
                fail("нужно не меньше 100 частиц", "particles", "N")
            if float(particles.get("dt", 0.0)) <= 0:
                fail("шаг dt обязателен и должен быть положительным", "particles", "dt")

        if "cross-validate" in order:
            functionals = scenario.section("cross-validate").get("functionals", ["mean", "variance"])
            for name in functionals:
                if name.partition(":")[0] not in ("mean", "variance"):
                    fail(f"неизвестный функционал '{name}'", "cross-validate", "functionals")

        if "conditions" in order:
            constants = scenario.section("conditions").get("constants")
            if constants is not None:
                for key in ("C", "Lambda", "N1", "N2"):
                    if key not in constants:
                        fail(f"в константах нет '{key}'", "conditions", "constants")


def load_scenario(path: str) -> Scenario:
    """
    Чтение и проверка файла сценария

    Raises:
        ConfigInvalid: при синтаксической или смысловой ошибке
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ConfigInvalid(f"не удалось прочитать {path}: {e}")
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _TOML_POSITION.search(str(e))
        raise ConfigInvalid(f"{path}: синтаксическая ошибка TOML: {e}",
                            line=int(match.group(1)) if match else None)
    scenario = Scenario.from_dict(data, text=text, source=path)
    logger.info(f"Сценарий '{scenario.name}' загружен из {path}: анализы {scenario.analyses}")
    return scenario
