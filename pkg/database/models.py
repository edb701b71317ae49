"""
Модели журнала запусков
"""
from datetime import datetime

from sqlalchemy import Column, Integer, String, DateTime, Text, Float, ForeignKey, Index, create_engine
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class ScenarioRun(Base):
    """Один запуск сценария"""
    __tablename__ = "scenario_runs"

    id = Column(Integer, primary_key=True)
    name = Column(String(200), nullable=False)
    config_hash = Column(String(64), nullable=False)  # sha256 эха конфигурации
    status = Column(String(20), nullable=False, default="running")  # running/success/failed/invalid
    exit_code = Column(Integer, nullable=True)
    output_dir = Column(Text, nullable=False)
    started_at = Column(DateTime, default=datetime.now)
    finished_at = Column(DateTime, nullable=True)

    artifacts = relationship("RunArtifact", back_populates="run", cascade="all, delete-orphan")
    analyses = relationship("AnalysisRecord", back_populates="run", cascade="all, delete-orphan")

    __table_args__ = (
        Index("idx_run_name", name),
        Index("idx_run_config_hash", config_hash),
    )

    def __repr__(self):
        return f"<ScenarioRun(id={self.id}, name='{self.name}', status='{self.status}')>"


class RunArtifact(Base):
    """Файл, записанный запуском"""
    __tablename__ = "run_artifacts"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("scenario_runs.id"), nullable=False)
    path = Column(Text, nullable=False)  # относительно каталога результатов
    sha256 = Column(String(64), nullable=False)
    size = Column(Integer, nullable=False)
    kind = Column(String(20), nullable=False)

    run = relationship("ScenarioRun", back_populates="artifacts")

    def __repr__(self):
        return f"<RunArtifact(run_id={self.run_id}, path='{self.path}')>"


class AnalysisRecord(Base):
    """Итог одного анализа в запуске"""
    __tablename__ = "analysis_records"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("scenario_runs.id"), nullable=False)
    analysis = Column(String(50), nullable=False)
    status = Column(String(20), nullable=False)
    duration = Column(Float, nullable=True)  # секунды
    summary = Column(Text, nullable=True)  # JSON

    run = relationship("ScenarioRun", back_populates="analyses")

    def __repr__(self):
        return f"<AnalysisRecord(run_id={self.run_id}, analysis='{self.analysis}', status='{self.status}')>"


def init_db(engine_url):
    """Создание таблиц журнала"""
    engine = create_engine(engine_url)
    Base.metadata.create_all(engine)
    return engine
