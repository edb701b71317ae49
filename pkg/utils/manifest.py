"""
Манифест артефактов запуска сценария
"""
import os
import logging
import threading
from datetime import datetime
from typing import Dict, List, Optional

from utils.io_utils import file_sha256, write_json, list_files

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def artifact_kind(path: str) -> str:
    """Тип артефакта по расположению и имени файла"""
    name = os.path.basename(path)
    if name.endswith(".csv") and name.startswith(("rho_", "stationary", "empirical")):
        return "density"
    if name.startswith("ensemble_"):
        return "ensemble"
    if name.endswith(".csv"):
        return "series"
    return "report"


class ArtifactManifest:
    """Список созданных файлов с контрольными суммами и статусами анализов"""

    def __init__(self, output_dir: str, config: Dict):
        self.output_dir = output_dir
        self.config = config
        self.files: Dict[str, str] = {}
        self.analyses: Dict[str, Dict] = {}
        self.lock = threading.Lock()
        os.makedirs(output_dir, exist_ok=True)

    def add(self, paths: List[str], analysis: Optional[str] = None) -> None:
        """Регистрация файлов, созданных анализом"""
        with self.lock:
            for path in paths:
                relative = os.path.relpath(path, self.output_dir).replace(os.sep, "/")
                if relative == MANIFEST_NAME:
                    continue
                self.files[relative] = analysis or ""
            logger.debug(f"Зарегистрировано {len(paths)} файлов для '{analysis}'")

    def record(self, analysis: str, status: Dict) -> None:
        with self.lock:
            self.analyses[analysis] = status

    def entries(self) -> List[Dict]:
        """Записи о файлах, отсортированные по пути"""
        entries = []
        for relative in sorted(self.files):
            path = os.path.join(self.output_dir, relative)
            entries.append({
                "path": relative,
                "analysis": self.files[relative],
                "kind": artifact_kind(relative),
                "sha256": file_sha256(path),
                "size": os.path.getsize(path),
            })
        return entries

    def unregistered(self) -> List[str]:
        """Файлы в каталоге результатов, не попавшие в манифест"""
        return sorted(set(list_files(self.output_dir)) - set(self.files) - {MANIFEST_NAME})

    def write(self, exit_code: int) -> str:
        """
        Запись manifest.json

        Returns:
            str: Путь к манифесту
        """
        with self.lock:
            missing = self.unregistered()
            if missing:
                logger.warning(f"Файлы вне манифеста: {missing}")
            data = {
                "created_at": datetime.now().isoformat(timespec="seconds"),
                "exit_code": exit_code,
                "config": self.config,
                "analyses": self.analyses,
                "files": self.entries(),
            }
            path = write_json(os.path.join(self.output_dir, MANIFEST_NAME), data)
        logger.info(f"Манифест записан: {path} ({len(data['files'])} файлов)")
        return path
