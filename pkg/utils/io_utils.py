"""
Чтение и запись артефактов: CSV плотностей и рядов, JSON, контрольные суммы
"""
import os
import json
import hashlib
import logging
from typing import Dict, List, Sequence

import numpy as np

from measures.grid import GridSpec, DensityField

logger = logging.getLogger(__name__)

# 17 значащих цифр
FLOAT_FORMAT = "%.16e"
GRID_COMMENT = "# grid"


def ensure_parent(path: str) -> str:
    """Создает родительский каталог файла, если его нет"""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return path


def _grid_comment(grid: GridSpec) -> str:
    lower = ",".join(repr(float(v)) for v in grid.lower)
    upper = ",".join(repr(float(v)) for v in grid.upper)
    cells = ",".join(str(int(v)) for v in grid.cells)
    return f"{GRID_COMMENT} lower={lower} upper={upper} cells={cells}"


def _parse_grid_comment(line: str) -> GridSpec:
    fields = dict(item.split("=", 1) for item in line[len(GRID_COMMENT):].split())
    return GridSpec.create(
        lower=[float(v) for v in fields["lower"].split(",")],
        upper=[float(v) for v in fields["upper"].split(",")],
        cells=[int(v) for v in fields["cells"].split(",")],
    )


def write_density_csv(density: DensityField, path: str) -> str:
    """
    Запись плотности в CSV "x[,y],rho" (порядок строк C, первая ось внешняя)

    Args:
        density (DensityField): Плотность
        path (str): Путь к файлу

    Returns:
        str: Путь к записанному файлу
    """
    grid = density.grid
    columns = ["x", "y"][:grid.dim] + ["rho"]
    table = np.column_stack([grid.centers, density.flat])
    ensure_parent(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(_grid_comment(grid) + "\n")
            f.write(",".join(columns) + "\n")
            np.savetxt(f, table, fmt=FLOAT_FORMAT, delimiter=",")
    except OSError as e:
        logger.error(f"Не удалось записать плотность в {path}: {str(e)}")
        raise
    return path


def read_density_csv(path: str) -> DensityField:
    """
    Чтение плотности из CSV

    Если комментарий с параметрами сетки отсутствует, сетка
    восстанавливается по центрам ячеек.
    """
    grid = None
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if first.startswith(GRID_COMMENT):
        grid = _parse_grid_comment(first.strip())
    table = np.loadtxt(path, delimiter=",", comments="#", skiprows=2 if grid else 1, ndmin=2)
    if grid is None:
        dim = table.shape[1] - 1
        axes = [np.unique(table[:, k]) for k in range(dim)]
        widths = [ax[1] - ax[0] for ax in axes]
        grid = GridSpec.create(
            lower=[ax[0] - w / 2 for ax, w in zip(axes, widths)],
            upper=[ax[-1] + w / 2 for ax, w in zip(axes, widths)],
            cells=[len(ax) for ax in axes],
        )
    return DensityField(grid, table[:, -1].reshape(grid.shape))


def write_series_csv(path: str, times: Sequence[float], values: Sequence[float],
                     value_name: str = "value") -> str:
    """Двухколоночный CSV (t,value)"""
    table = np.column_stack([np.asarray(times, dtype=float), np.asarray(values, dtype=float)])
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"t,{value_name}\n")
        np.savetxt(f, table, fmt=FLOAT_FORMAT, delimiter=",")
    return path


def read_series_csv(path: str):
    """Чтение двухколоночного ряда: (times, values)"""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 0], table[:, 1]


def write_ensemble_csv(path: str, positions: np.ndarray) -> str:
    """Снимок ансамбля частиц: "id,x[,y]" """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    columns = ["id"] + ["x", "y"][:positions.shape[1]]
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(columns) + "\n")
        for i, row in enumerate(positions):
            f.write(str(i) + "," + ",".join(FLOAT_FORMAT % v for v in row) + "\n")
    return path


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: str, data: Dict) -> str:
    """JSON с сортировкой ключей (повторный запуск дает тот же файл)"""
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def file_sha256(path: str, chunk_size: int = 1 << 16) -> str:
    """Контрольная сумма файла"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def padded_index(index: int, total: int) -> str:
    """Индекс с нулями слева по ширине total"""
    width = max(4, len(str(max(total - 1, 0))))
    return str(index).zfill(width)


def list_files(root: str) -> List[str]:
    """Все файлы каталога (относительные пути, отсортированы)"""
    found = []
    for current, _, names in os.walk(root):
        for name in names:
            found.append(os.path.relpath(os.path.join(current, name), root).replace(os.sep, "/"))
    return sorted(found)
