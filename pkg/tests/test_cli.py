import json
import subprocess
import sys

import pytest

from ample_sawtooth import checks as C
from ample_sawtooth import cli
from ample_sawtooth.cli import main, parse_drift


def test_decompose_writes_grid(tmp_path):
    assert main(["decompose", "--kmax", "4", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "grid.tsv").read_text().splitlines()
    assert sum(1 for r in rows if r and not r.startswith("#") and r[0].isdigit()) == 8 + 16 + 32 + 64
    assert json.loads((tmp_path / "config.json").read_text())["k_max"] == 4


@pytest.mark.parametrize("argv", [
    ["build-sawtooth", "--drift", "uniform:5"],
    ["decompose", "--kmax", "30"],
    ["decompose", "--dim", "3", "--kmax", "7"],
    ["build-sawtooth", "--eta", "1.5"],
    ["build-sawtooth", "--drift", "spiral:1"],
    ["verify-claims", "--sawtooth", "/nonexistent/s.tsv"],
    ["verify-claims", "--checks", "bourgain,psychic"],
])
def test_input_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_construction_violation_exit_3(tmp_path):
    assert main(["build-sawtooth", "--drift", "cone:0.5:4,18", "--eta", "0.01", "--out", str(tmp_path)]) == 3


def test_claim_violation_exit_4(tmp_path, monkeypatch):
    assert main(["build-sawtooth", "--kmax", "3", "--out", str(tmp_path)]) == 0
    monkeypatch.setattr(cli, "_run_check",
                        lambda name, *a: C.ClaimReport(name, {}, {"v": 0.0}, C.VIOLATED))
    assert main(["verify-claims", "--checks", "bourgain", "--out", str(tmp_path)]) == 4
    assert "violated" in (tmp_path / "claims" / "summary.txt").read_text()


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"k_max": 3, "eps": 0.2}))
    assert main(["constants", "--config", str(conf), "--eps", "0.1", "--out", str(tmp_path)]) == 0
    saved = json.loads((tmp_path / "config.json").read_text())
    assert saved["k_max"] == 3 and saved["eps"] == 0.1
    assert "N0=200" in (tmp_path / "constants.tsv").read_text()


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"colour": "blue"}))
    assert main(["constants", "--config", str(conf)]) == 2


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("AMPLE_SAWTOOTH_OUT", str(tmp_path / "env"))
    assert main(["build-sawtooth", "--kmax", "3"]) == 0
    assert (tmp_path / "env" / "sawtooth.tsv").exists()


def test_measure_command(tmp_path):
    assert main(["build-sawtooth", "--drift", "cone:0.5:4,18", "--out", str(tmp_path)]) == 0
    assert main(["estimate-measure", "--drift", "cone:0.5:4,18", "--walkers", "300", "--pole", "0.3", "0.2",
                 "--out", str(tmp_path)]) == 0
    text = (tmp_path / "measure.tsv").read_text()
    assert "box0.top" in text


def test_parse_drift_forms(tmp_path):
    assert parse_drift("zero", 2, 1.0).family == "zero"
    spec = parse_drift("cone:0.3:4,18;5,3", 2, 1.0)
    assert len(spec.targets) == 2
    with pytest.raises(ValueError):
        parse_drift("cone:0.3:", 2, 1.0)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ample_sawtooth", "constants", "--kmax", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "N0=200" in r.stdout
