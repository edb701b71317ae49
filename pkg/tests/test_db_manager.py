import json

import pytest

from database.db_manager import DatabaseManager


@pytest.fixture
def db(tmp_path):
    return DatabaseManager(f"sqlite:///{tmp_path / 'ledger.db'}")


def test_run_lifecycle(db):
    run_id = db.start_run("demo", "a" * 64, "/tmp/demo")
    db.record_analysis(run_id, "evolve", "success", duration=0.5, summary={"horizon": 1.0, "gap": float("nan")})
    db.record_analysis(run_id, "stationary", "error", summary={"error": "NoConvergence"})
    assert db.finish_run(run_id, "failed", 2)

    runs = db.get_runs()
    assert len(runs) == 1
    assert runs[0].status == "failed"
    assert runs[0].exit_code == 2
    assert runs[0].finished_at is not None

    analyses = db.get_run_analyses(run_id)
    assert [a.analysis for a in analyses] == ["evolve", "stationary"]
    assert json.loads(analyses[0].summary) == {"gap": None, "horizon": 1.0}


def test_artifacts(db):
    run_id = db.start_run("demo", "b" * 64, "/tmp/demo")
    entries = [
        {"path": "stationary.csv", "sha256": "1" * 64, "size": 10, "kind": "density"},
        {"path": "decay_fit.json", "sha256": "2" * 64, "size": 5, "kind": "report"},
    ]
    assert db.record_artifacts(run_id, entries) == 2
    assert [a.path for a in db.get_run_artifacts(run_id)] == ["decay_fit.json", "stationary.csv"]


def test_runs_filtered_by_name(db):
    first = db.start_run("first", "c" * 64, "/tmp/a")
    second = db.start_run("second", "d" * 64, "/tmp/b")
    assert [r.id for r in db.get_runs()] == [second, first]
    assert [r.name for r in db.get_runs(name="first")] == ["first"]


def test_finish_unknown_run(db):
    assert db.finish_run(999, "success", 0) is False
