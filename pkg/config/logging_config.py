"""
Конфигурация логирования
"""
import os
import logging
from logging.handlers import RotatingFileHandler

from config.settings import LOG_DIR, LOG_LEVEL


def setup_logging(log_dir=None, level=None):
    """
    Настройка корневого логгера: файл с ротацией и консоль

    Args:
        log_dir (str, optional): Каталог для файла лога
        level (str|int, optional): Уровень логирования

    Returns:
        logging.Logger: Корневой логгер
    """
    log_dir = log_dir or LOG_DIR
    level = level or LOG_LEVEL
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)

    # Создаем директорию для логов, если её нет
    os.makedirs(log_dir, exist_ok=True)
    log_file_path = os.path.join(log_dir, 'fpklab.log')

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # Настройка для файла с явным указанием кодировки UTF-8
    file_handler = RotatingFileHandler(
        log_file_path,
        maxBytes=10 * 1024 * 1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setFormatter(formatter)
    file_handler.setLevel(level)

    # Настройка для консоли
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(level)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    # Повторный вызов не должен дублировать обработчики
    for handler in list(root_logger.handlers):
        if getattr(handler, '_fpklab', False):
            root_logger.removeHandler(handler)
            handler.close()
    file_handler._fpklab = True
    console_handler._fpklab = True
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    # Отдельные настройки для библиотек
    logging.getLogger('sqlalchemy.engine').setLevel(logging.WARNING)

    return root_logger
