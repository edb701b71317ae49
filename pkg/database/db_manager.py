"""
Журнал запусков сценариев
"""
import json
import time
import logging
import functools
from datetime import datetime

from sqlalchemy.exc import OperationalError
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, scoped_session

from database.models import ScenarioRun, RunArtifact, AnalysisRecord, init_db
from utils.io_utils import to_jsonable

logger = logging.getLogger(__name__)


class DatabaseManager:
    """Менеджер журнала запусков"""

    def __init__(self, db_url):
        """
        Инициализация менеджера БД

        Args:
            db_url (str): URL базы данных SQLAlchemy
        """
        init_db(db_url)
        options = {"pool_pre_ping": True}
        if db_url.lower().startswith("sqlite"):
            # Журнал пишется из потоков пула анализов
            options["connect_args"] = {"check_same_thread": False, "timeout": 60}
        self.engine = create_engine(db_url, **options)
        self.session_factory = sessionmaker(bind=self.engine, expire_on_commit=False)
        self.Session = scoped_session(self.session_factory)

    def with_retry(max_attempts=5, delay=1.0, backoff_factor=2.0, error_types=(OperationalError,)):
        """
        Декоратор повторных попыток с экспоненциальной задержкой при блокировке БД

        Args:
            max_attempts (int): Максимальное количество попыток
            delay (float): Начальная задержка между попытками в секундах
            backoff_factor (float): Множитель задержки
            error_types (tuple): Типы ошибок, при которых операция повторяется
        """
        def decorator(func):
            @functools.wraps(func)
            def wrapper(self, *args, **kwargs):
                current_delay = delay
                last_error = None
                for attempt in range(1, max_attempts + 1):
                    try:
                        return func(self, *args, **kwargs)
                    except error_types as e:
                        last_error = e
                        if attempt == max_attempts:
                            break
                        locked = "locked" in str(e).lower() or "busy" in str(e).lower()
                        wait = current_delay if locked else delay
                        if locked:
                            current_delay *= backoff_factor
                        logger.warning(f"Ошибка БД ({str(e)}), повторная попытка {attempt}/{max_attempts} через {wait:.2f}с")
                        time.sleep(wait)
                logger.error(f"Не удалось выполнить операцию с БД после {max_attempts} попыток: {str(last_error)}")
                raise last_error
            return wrapper
        return decorator

    @with_retry(max_attempts=3, delay=0.5)
    def start_run(self, name, config_hash, output_dir):
        """
        Регистрация начала запуска

        Returns:
            int: ID запуска
        """
        session = self.Session()
        try:
            run = ScenarioRun(name=name, config_hash=config_hash, output_dir=output_dir, status="running")
            session.add(run)
            session.commit()
            logger.debug(f"Запуск '{name}' зарегистрирован с ID {run.id}")
            return run.id
        except Exception as e:
            session.rollback()
            logger.error(f"Ошибка при регистрации запуска: {str(e)}")
            raise
        finally:
            session.close()

    @with_retry(max_attempts=3, delay=0.5)
    def record_analysis(self, run_id, analysis, status, duration=None, summary=None):
        """Запись итога анализа"""
        session = self.Session()
        try:
            record = AnalysisRecord(
                run_id=run_id, analysis=analysis, status=status, duration=duration,
                summary=json.dumps(to_jsonable(summary or {}), ensure_ascii=False, sort_keys=True),
            )
            session.add(record)
            session.commit()
            return record.id
        except Exception as e:
            session.rollback()
            logger.error(f"Ошибка при записи анализа {analysis}: {str(e)}")
            raise
        finally:
            session.close()

    @with_retry(max_attempts=3, delay=0.5)
    def record_artifacts(self, run_id, entries):
        """
        Пакетная запись артефактов из манифеста

        Args:
            run_id (int): ID запуска
            entries (list): Записи манифеста (path, sha256, size, kind)

        Returns:
            int: Количество записанных артефактов
        """
        session = self.Session()
        try:
            for entry in entries:
                session.add(RunArtifact(run_id=run_id, path=entry["path"], sha256=entry["sha256"],
                                        size=entry["size"], kind=entry["kind"]))
            session.commit()
            logger.debug(f"Записано {len(entries)} артефактов запуска {run_id}")
            return len(entries)
        except Exception as e:
            session.rollback()
            logger.error(f"Ошибка при записи артефактов: {str(e)}")
            raise
        finally:
            session.close()

    @with_retry(max_attempts=3, delay=0.5)
    def finish_run(self, run_id, status, exit_code):
        """Фиксация завершения запуска"""
        session = self.Session()
        try:
            run = session.query(ScenarioRun).filter_by(id=run_id).first()
            if run is None:
                logger.warning(f"Запуск {run_id} не найден")
                return False
            run.status = status
            run.exit_code = exit_code
            run.finished_at = datetime.now()
            session.commit()
            return True
        except Exception as e:
            session.rollback()
            logger.error(f"Ошибка при завершении запуска {run_id}: {str(e)}")
            raise
        finally:
            session.close()

    def get_runs(self, name=None, limit=50):
        """
        Последние запуски, новые первыми

        Args:
            name (str, optional): Фильтр по имени сценария
            limit (int): Максимальное количество записей

        Returns:
            list: Список объектов ScenarioRun
        """
        session = self.Session()
        try:
            query = session.query(ScenarioRun)
            if name:
                query = query.filter_by(name=name)
            return query.order_by(ScenarioRun.id.desc()).limit(limit).all()
        except Exception as e:
            logger.error(f"Ошибка при получении запусков: {str(e)}")
            return []
        finally:
            session.close()

    def get_run_artifacts(self, run_id):
        session = self.Session()
        try:
            return session.query(RunArtifact).filter_by(run_id=run_id).order_by(RunArtifact.path).all()
        except Exception as e:
            logger.error(f"Ошибка при получении артефактов запуска {run_id}: {str(e)}")
            return []
        finally:
            session.close()

    def get_run_analyses(self, run_id):
        session = self.Session()
        try:
            return session.query(AnalysisRecord).filter_by(run_id=run_id).order_by(AnalysisRecord.id).all()
        except Exception as e:
            logger.error(f"Ошибка при получении анализов запуска {run_id}: {str(e)}")
            return []
        finally:
            session.close()
