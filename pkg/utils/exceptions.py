"""
Исключения fpklab
"""


class FpkLabError(Exception):
    """Базовое исключение проекта"""


class ConfigInvalid(FpkLabError, ValueError):
    """Ошибка в файле сценария"""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"строка {line}")
        if field:
            location.append(f"поле '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


# Ошибки входных данных

class ZeroMass(FpkLabError, ValueError):
    """Нулевая масса при нормировке"""


class GridMismatch(FpkLabError, ValueError):
    """Плотности заданы на разных сетках"""


class DimensionUnsupported(FpkLabError, ValueError):
    """Операция не поддерживается в данной размерности"""


class MassLeakage(FpkLabError, ValueError):
    """Слишком большая доля массы вне расчетной области"""


class ConstantsMissing(FpkLabError, ValueError):
    """Не заданы константы условий и автоподбор отключен"""


class NonSmoothPsi(FpkLabError, ValueError):
    """У функции нет производных в замкнутой форме"""


class AnisotropicDiffusion(FpkLabError, ValueError):
    """Тождества классификатора сформулированы только для A = I"""


class EmptyTrajectory(FpkLabError, ValueError):
    """Траектория без снимков"""


class WindowTooShort(FpkLabError, ValueError):
    """Окно подгонки содержит меньше пяти точек"""


class HypothesisViolated(FpkLabError, ValueError):
    """Нарушено условие C < kappa"""


class TimeGridMismatch(FpkLabError, ValueError):
    """Временные сетки не совпадают"""


# Численные сбои анализа

class AnalysisFailure(FpkLabError, RuntimeError):
    """Сбой на уровне анализа (код выхода 2)"""


class NoConvergence(AnalysisFailure):
    """Итерации не сошлись"""

    def __init__(self, message, history=None, iterations=None):
        super().__init__(message)
        self.history = history if history is not None else {}
        self.iterations = iterations


class BlowUp(AnalysisFailure):
    """Момент ∫V dμ_t вырос выше порога"""

    def __init__(self, message, trajectory=None, time=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.time = time


class StabilityViolation(AnalysisFailure):
    """Шаг по времени превышает границу устойчивости явной схемы"""


class NotConfining(AnalysisFailure):
    """Снос не удерживает массу в расчетной области"""


class NegativeDensity(AnalysisFailure):
    """Отрицательная плотность: ошибка схемы"""
