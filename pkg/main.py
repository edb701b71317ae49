"""
Командная строка fpklab
"""
import os
import sys
import logging
import argparse

from dotenv import load_dotenv

from config.logging_config import setup_logging
from config.settings import EXAMPLES_DIR, FPKLAB_THREADS
from scenarios.config import load_scenario
from scenarios.runner import run_scenario, EXIT_OK, EXIT_CONFIG
from utils.exceptions import ConfigInvalid

load_dotenv()

logger = logging.getLogger(__name__)


def list_examples(examples_dir=EXAMPLES_DIR):
    """Имена встроенных сценариев"""
    if not os.path.isdir(examples_dir):
        return []
    return sorted(os.path.splitext(name)[0] for name in os.listdir(examples_dir) if name.endswith(".toml"))


def resolve_config(path, examples_dir=EXAMPLES_DIR):
    """Путь к файлу или имя встроенного сценария"""
    if os.path.exists(path):
        return path
    candidate = os.path.join(examples_dir, f"{path}.toml")
    return candidate if os.path.exists(candidate) else path


def validate_command(args):
    try:
        scenario = load_scenario(resolve_config(args.config))
    except ConfigInvalid as e:
        print(f"Ошибка: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{scenario.name}: корректен, анализы {scenario.execution_order()}")
    return EXIT_OK


def run_command(args):
    return run_scenario(resolve_config(args.config), output_dir=args.output, db_url=args.db,
                        threads=args.threads)


def list_command(args):
    for name in list_examples():
        print(name)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="fpklab", description="Численная лаборатория нелинейных уравнений ФПК")
    parser.add_argument("--log-level", default=None, help="Уровень логирования (по умолчанию FPKLAB_LOG_LEVEL)")
    parser.add_argument("--log-dir", default=None, help="Каталог логов (по умолчанию FPKLAB_LOG_DIR)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Выполнить сценарий")
    run.add_argument("config", help="TOML-файл сценария или имя встроенного примера")
    run.add_argument("--output", default=None, help="Каталог результатов вместо указанного в сценарии")
    run.add_argument("--db", default=None, help="URL журнала запусков (по умолчанию FPKLAB_DATABASE_URL)")
    run.add_argument("--threads", type=int, default=FPKLAB_THREADS, help="Ширина пула потоков")
    run.set_defaults(handler=run_command)

    validate = commands.add_parser("validate", help="Проверить сценарий без вычислений")
    validate.add_argument("config", help="TOML-файл сценария или имя встроенного примера")
    validate.set_defaults(handler=validate_command)

    examples = commands.add_parser("list-examples", help="Список встроенных сценариев")
    examples.set_defaults(handler=list_command)
    return parser


def main(argv=None):
    """Точка входа"""
    args = build_parser().parse_args(argv)
    setup_logging(log_dir=args.log_dir, level=args.log_level)
    logger.info(f"Команда: {args.command}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
