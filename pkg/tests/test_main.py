import os

import pytest

from main import main, list_examples, resolve_config
from config.settings import EXAMPLES_DIR


@pytest.fixture
def log_dir(tmp_path):
    return str(tmp_path / "logs")


def test_list_examples(capsys, log_dir):
    assert main(["--log-dir", log_dir, "list-examples"]) == 0
    printed = capsys.readouterr().out.split()
    assert "example_1_1_eps05" in printed
    assert printed == list_examples()


def test_resolve_config(tmp_path):
    assert resolve_config("example_w1") == os.path.join(EXAMPLES_DIR, "example_w1.toml")
    assert resolve_config("no_such_example") == "no_such_example"


def test_validate(capsys, log_dir):
    assert main(["--log-dir", log_dir, "validate", "example_1_1_eps05"]) == 0
    assert "example_1_1_eps05" in capsys.readouterr().out
    assert os.path.exists(os.path.join(log_dir, "fpklab.log"))


def test_validate_invalid(tmp_path, capsys, log_dir):
    path = tmp_path / "broken.toml"
    path.write_text("[grid]\nlower = 0.0\n", encoding="utf-8")
    assert main(["--log-dir", log_dir, "validate", str(path)]) == 1
    assert capsys.readouterr().err


def test_run(tmp_path, log_dir, output_dir):
    path = tmp_path / "scenario.toml"
    path.write_text(
        'name = "cli"\nanalyses = ["stationary"]\n\n[grid]\nlower = -8.0\nupper = 8.0\ncells = 64\n\n'
        '[drift]\nvariant = "MeanFieldLinear"\nepsilon = 0.5\n\n'
        '[initial]\nkind = "gaussian"\nmean = 1.0\nvariance = 1.0\n',
        encoding="utf-8",
    )
    code = main(["--log-dir", log_dir, "--log-level", "WARNING", "run", str(path),
                 "--output", output_dir, "--db", "", "--threads", "1"])
    assert code == 0
    assert os.path.exists(os.path.join(output_dir, "stationary.csv"))
    assert os.path.exists(os.path.join(output_dir, "manifest.json"))


def test_unknown_command(log_dir):
    with pytest.raises(SystemExit):
        main(["--log-dir", log_dir, "plot"])
