import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from roughsbm.cli import main
from roughsbm.experiments import ExperimentConfig, UsageError, load_config, run_experiment, write_csv


def small_config(tmp_path, **kw):
    cfg = {"experiment": "mollifier", "side_length": 4.0, "points": 128, "seed": 5}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["verify", "nonsense"])
    assert e.value.code == 1
    assert main(["run"]) == 1
    assert main(["run", "no-such-experiment"]) == 1
    assert "available" in capsys.readouterr().err


def test_unknown_experiment_in_config(tmp_path):
    with pytest.raises(UsageError):
        ExperimentConfig("bogus")
    p = tmp_path / "c.yaml"
    p.write_text("side_length: 4\n")
    with pytest.raises(UsageError):
        load_config(p)


def test_yaml_extras_go_to_params(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("experiment: duality\nbox: 3\nphi0_list: [[1, 0.5, 0, 0]]\n")
    cfg = load_config(p)
    assert cfg.params == {"box": 3, "phi0_list": [[1, 0.5, 0, 0]]}


def test_rerun_is_byte_identical(tmp_path):
    cfg = small_config(tmp_path, experiment="env", samples=2)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = next((tmp_path / "a").glob("env-*/noise_norms.csv"))
    b = next((tmp_path / "b").glob("env-*/noise_norms.csv"))
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert list(rows[0])[:4] == ["config_hash", "code_version", "grid", "seed"]
    assert rows[0]["seed"] == "5"
    assert not (a.parent / "INCOMPLETE").exists()


def test_seed_changes_hash(tmp_path):
    c = ExperimentConfig("env", 4.0, 128)
    assert c.config_hash != c.with_overrides(seed=1).config_hash
    assert c.config_hash == c.with_overrides(out="elsewhere").config_hash


def test_mollifier_run_passes(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] is True
    rep = json.loads((tmp_path / out["out"].split("/")[-1] / "report.json").read_text())
    assert rep["summary"]["mass_ok"]


def test_env_norm_solve_chain(tmp_path, capsys):
    arch = tmp_path / "env.npz"
    assert main(["env", "gen", "--n", "128", "--side", "4", "--alpha", "1/4", "--samples", "2",
                 "--seed", "1", "--out", str(arch)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["archive"] == str(arch) and info["C_alpha"] > 0
    assert main(["norm", "eval", "--env", str(arch), "--region", "P0.5"]) == 0
    row = json.loads(capsys.readouterr().out)
    assert row["symbol"] == "xi" and row["value"] > 0
    traj = tmp_path / "traj.npz"
    assert main(["solve", "--env", str(arch), "--T", "0.05", "--dt", "1e-3", "--out", str(traj)]) == 0
    assert traj.exists() and traj.with_suffix(".csv").exists()
    assert main(["solve", "--env", str(tmp_path / "missing.npz")]) == 1


def test_failed_verification_exits_two(tmp_path, monkeypatch):
    from roughsbm import experiments
    monkeypatch.setitem(experiments.PIPELINES, "mollifier",
                        lambda cfg: experiments.ExperimentResult({}, {}, False))
    assert main(["run", "--config", str(small_config(tmp_path)), "--out", str(tmp_path)]) == 2


def test_write_csv_formats(tmp_path):
    cfg = ExperimentConfig("env", 4.0, 128, seed=2)
    cols = write_csv(tmp_path / "t.csv", [{"a": 0.1, "b": True, "c": [1, np.float64(2.5)]}, {"d": None}], cfg)
    assert cols == ["config_hash", "code_version", "grid", "seed", "a", "b", "c", "d"]
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[1].endswith('0.1,true,"[1, 2.5]",')


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "roughsbm", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "compact-support" in r.stdout
