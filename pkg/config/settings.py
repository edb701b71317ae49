"""
Настройки проекта fpklab
"""
import os
from dotenv import load_dotenv

# Загрузка переменных окружения из .env файла
load_dotenv()

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Ширина параллельной обработки (пул потоков для свипов и реплик)
FPKLAB_THREADS = max(1, int(os.getenv("FPKLAB_THREADS", "1")))

# Журнал запусков в БД (пустая строка - журнал отключен)
DATABASE_URL = os.getenv("FPKLAB_DATABASE_URL", "")

# Логирование
LOG_DIR = os.getenv("FPKLAB_LOG_DIR", os.path.join(PROJECT_ROOT, "logs"))
LOG_LEVEL = os.getenv("FPKLAB_LOG_LEVEL", "INFO")

# Каталог результатов по умолчанию
OUTPUT_DIR = os.getenv("FPKLAB_OUTPUT_DIR", "results")

# Каталог встроенных сценариев
EXAMPLES_DIR = os.path.join(PROJECT_ROOT, "scenarios", "examples")

# Численные допуски
MASS_TOLERANCE = 1e-12
ZERO_MASS = 1e-300
MEMBERSHIP_TOLERANCE = 1e-10
CONSTRAINT_TOLERANCE = 1e-10
H_CHECK_SLACK = 1e-9
MASS_LEAKAGE_LIMIT = 1e-8
BOUNDARY_BAND_WARNING = 1e-8
BOUNDARY_BAND_CELLS = 10

# Эволюция
BLOWUP_FACTOR = 1e6
SNAPSHOT_STRIDE = 0.1

# Частицы
MIN_PARTICLES = 100
DEFAULT_SEED = 0
