import json
import os

from utils.io_utils import file_sha256, write_json
from utils.manifest import ArtifactManifest, MANIFEST_NAME, artifact_kind


def test_artifact_kind():
    assert artifact_kind("evolve/snapshots/rho_0003.csv") == "density"
    assert artifact_kind("stationary.csv") == "density"
    assert artifact_kind("particles/seed_0/ensemble_0.csv") == "ensemble"
    assert artifact_kind("evolve/mean.csv") == "series"
    assert artifact_kind("decay_fit.json") == "report"


def test_manifest_lists_registered_files(output_dir):
    manifest = ArtifactManifest(output_dir, {"name": "demo"})
    report = write_json(os.path.join(output_dir, "stationary.json"), {"residual": 1e-9})
    series = os.path.join(output_dir, "evolve", "mean.csv")
    os.makedirs(os.path.dirname(series))
    with open(series, "w", encoding="utf-8") as f:
        f.write("t,mean\n0,1\n")
    manifest.add([report], "stationary")
    manifest.add([series], "evolve")
    manifest.record("stationary", {"status": "success"})

    entries = manifest.entries()
    assert [e["path"] for e in entries] == ["evolve/mean.csv", "stationary.json"]
    assert entries[0]["sha256"] == file_sha256(series)
    assert entries[0]["analysis"] == "evolve"
    assert manifest.unregistered() == []

    path = manifest.write(0)
    assert os.path.basename(path) == MANIFEST_NAME
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    assert data["exit_code"] == 0
    assert data["config"] == {"name": "demo"}
    assert data["analyses"]["stationary"]["status"] == "success"
    assert len(data["files"]) == 2
    # Сам манифест не попадает в список файлов
    assert manifest.unregistered() == []


def test_unregistered_files_are_reported(output_dir):
    manifest = ArtifactManifest(output_dir, {})
    write_json(os.path.join(output_dir, "stray.json"), {})
    assert manifest.unregistered() == ["stray.json"]
