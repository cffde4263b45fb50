import json

import pytest

from recmatch.cli import main


@pytest.fixture
def bench_cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "instance_grid": [{"num_demands": 3, "num_supplies": 6, "theta": 2, "prob_model": "uniform_range"}],
        "methods": ["dap", "surrogate", "saa"], "replications": 2, "saa_samples": 100, "seed": 3,
    }))
    return path


def test_generate_solve_evaluate(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert main(["generate", "--demands", "3", "--supplies", "6", "--theta", "2", "--seed", "4",
                 "--out", str(inst)]) == 0
    rep = tmp_path / "rep.json"
    assert main(["solve", "--instance", str(inst), "--methods", "homog_exact", "--out", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["method"] == "homog_exact"
    capsys.readouterr()
    assert main(["evaluate", "--instance", str(inst), "--rec", str(rep)]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["total"] == pytest.approx(doc["exact_value"], rel=1e-12)
    assert main(["evaluate", "--instance", str(inst), "--rec", str(rep), "--samples", "2000"]) == 0
    mc = json.loads(capsys.readouterr().out)
    assert mc["method"] == "monte_carlo" and mc["stderr"] > 0


def test_generate_from_config(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"num_demands": 2, "num_supplies": 4, "theta": 2,
                               "utility_model": "case_like", "prob_model": "case_like", "seed": 1}))
    out = tmp_path / "i.json"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["distances"] is not None


def test_bench_deterministic(tmp_path, bench_cfg, capsys):
    assert main(["bench", "--config", str(bench_cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["bench", "--config", str(bench_cfg), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert "Gap-A%" in capsys.readouterr().out


def test_flag_overrides(tmp_path, bench_cfg):
    out = tmp_path / "o"
    assert main(["bench", "--config", str(bench_cfg), "--out", str(out), "--methods", "dap",
                 "--seed", "9", "--tau", "0.05", "--time-limit", "10", "--samples", "50"]) == 0
    summary = json.loads((out / "results_summary.json").read_text())
    cfg = summary["config"]
    assert cfg["methods"] == ["dap"] and cfg["seed"] == 9 and cfg["tau"] == 0.05
    assert cfg["time_limit_seconds"] == 10 and cfg["saa_samples"] == 50


def test_sweep_and_oos(tmp_path, bench_cfg, capsys):
    assert main(["sweep", "--config", str(bench_cfg), "--axis", "p", "--values", "0.5,0.9",
                 "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "sweep_p.csv").exists()
    assert main(["oos", "--config", str(bench_cfg), "--perturbations", "OutL,OutH",
                 "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "oos.csv").read_text()
    assert "OutL" in text and "OutH" in text


def test_bounds(tmp_path, capsys):
    assert main(["bounds", "--theta", "4", "--demands", "10", "--a", "5", "--b", "10", "--p", "0.8",
                 "--tau", "0.01"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["theorem1"]["gap_bound"] == pytest.approx(0.1151, abs=1e-4)
    inst = tmp_path / "inst.json"
    main(["generate", "--demands", "3", "--supplies", "6", "--theta", "2", "--prob-model",
          "uniform_range", "--out", str(inst)])
    capsys.readouterr()
    assert main(["bounds", "--instance", str(inst), "--which", "theorem2", "correlated"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"theorem2", "correlated"}
    # theorem 1 on heterogeneous input is a configuration error
    assert main(["bounds", "--instance", str(inst), "--which", "theorem1"]) == 1


def test_exit_codes(tmp_path, bench_cfg):
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["bench"]) == 1
    assert main(["frobnicate"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"instance_grid": [], "methods": ["dap"]}))
    assert main(["bench", "--config", str(bad)]) == 1
    inst = tmp_path / "inst.json"
    main(["generate", "--demands", "2", "--supplies", "3", "--theta", "1", "--out", str(inst)])
    assert main(["solve", "--instance", str(inst), "--methods", "npp"]) == 2
    assert main(["--help"]) == 0
