import json

import numpy as np
import pytest

from roughsbm.experiments import (ExperimentConfig, ExperimentError, PIPELINES, EXPERIMENTS,
                                  compact_support_verdict, run_experiment)


def test_every_experiment_has_a_pipeline():
    assert set(PIPELINES) == set(EXPERIMENTS)


def synthetic(pde, mc):
    return {"pde": pde, "mc": mc}


def test_verdict_accepts_stable_increasing_table():
    pde = {(2, 1e3): 0.50, (2, 1e4): 0.505, (3, 1e3): 0.80, (3, 1e4): 0.802, (4, 1e3): 0.95, (4, 1e4): 0.951}
    v = compact_support_verdict(synthetic(pde, {2: (0.5, 0.01), 3: (0.82, 0.01), 4: (0.95, 0.005)}))
    assert v["passed"] and v["moderate_box"] == 3
    assert v["gap"] == pytest.approx(0.018)


def test_verdict_rejects_each_failure():
    base = {(2, 1e3): 0.50, (2, 1e4): 0.505, (3, 1e3): 0.80, (3, 1e4): 0.802}
    mc = {2: (0.5, 0.01), 3: (0.80, 0.01)}
    assert compact_support_verdict(synthetic(base, mc))["passed"]
    unstable = {**base, (3, 1e3): 0.7}
    assert not compact_support_verdict(synthetic(unstable, mc))["passed"]
    flat = {**base, (3, 1e4): 0.4, (3, 1e3): 0.4}
    assert not compact_support_verdict(synthetic(flat, {2: (0.5, 0.01), 3: (0.4, 0.01)}))["passed"]
    assert not compact_support_verdict(synthetic(base, {2: (0.5, 0.01), 3: (0.6, 0.01)}))["passed"]


def test_failed_pipeline_leaves_marker(tmp_path, monkeypatch):
    from roughsbm import experiments

    def boom(cfg):
        raise RuntimeError("nope")
    monkeypatch.setitem(experiments.PIPELINES, "env", boom)
    cfg = ExperimentConfig("env", 4.0, 128)
    with pytest.raises(ExperimentError):
        run_experiment(cfg, tmp_path)
    marker = tmp_path / f"env-{cfg.config_hash}" / "INCOMPLETE"
    assert marker.read_text().startswith("failed: RuntimeError")


def test_small_duality_run(tmp_path):
    cfg = ExperimentConfig("duality", 4.0, 128, T=0.2, trials=400, n_values=[8], samples=2, seed=4)
    out, res = run_experiment(cfg, tmp_path)
    assert len(res.tables["duality"]) == 3
    assert all(r["truncated"] == 0 for r in res.tables["duality"])
    assert res.summary["max_z"] < 4
    rep = json.loads((out / "report.json").read_text())
    assert rep["config_hash"] == cfg.config_hash


def test_small_norm_equivalence(tmp_path):
    cfg = ExperimentConfig("norm-equivalence", 4.0, 128, trials=3, params={"box": 0.5})
    _, res = run_experiment(cfg, tmp_path)
    for a in ("-1.1", "-0.2", "0.5"):
        s = res.summary[a]
        assert 1 <= s["K"] < np.inf and s["min"] > 0


def test_small_solve_and_brwre(tmp_path):
    cfg = ExperimentConfig("solve", 4.0, 128, T=0.05, dt=1e-3, samples=2)
    _, res = run_experiment(cfg, tmp_path)
    assert res.tables["trajectory"]
    cfg = ExperimentConfig("brwre", 4.0, 128, T=0.2, trials=50, samples=2, n_values=[8])
    _, res = run_experiment(cfg, tmp_path)
    assert 0 < res.summary["laplace_mean"] <= 1
