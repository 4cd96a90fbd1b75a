import json

import numpy as np
import pytest

from rumornet.cli import JobConfig, default_grid, main, run_predict
from rumornet.model import CurveCoefficients, eval_F
from rumornet.spread import BurnSeries


def small_config(tmp_path, grid, name="cfg.json"):
    cfg = {
        "population": {"n_total": 400},
        "ensemble": {"n_populations": 2, "runs_per_population": 3, "iterations": 100},
        "grid": grid,
        "master_seed": 5,
    }
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def summary_without_dir(out):
    # the output directory is recorded in the config; everything else must match
    text = (out / "summary.json").read_text()
    return text.replace(json.dumps(str(out)), '"<out>"')


def test_default_grid_size():
    assert len(JobConfig(command="sweep").grid_points()) == 500
    assert default_grid()["p_usg"] == [0.0, 0.03, 0.05, 0.07, 0.10]


def test_sweep_single_point_is_reproducible(tmp_path):
    cfg = small_config(tmp_path, {"p_ii": [0.05], "p_ip": [0.05], "p_usg": [0.03]})
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == ["point_0000.csv", "summary.json"]
    assert (outs[0] / "point_0000.csv").read_bytes() == (outs[1] / "point_0000.csv").read_bytes()
    assert summary_without_dir(outs[0]) == summary_without_dir(outs[1])
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["schema_version"] == "1.0"
    assert summary["master_seed"] == 5
    assert summary["n_points"] == 1


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = small_config(tmp_path, {"p_ii": [0.02, 0.05], "p_ip": [0.05], "p_usg": [0.0]})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
    for name in ("point_0000.csv", "point_0001.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()
    assert summary_without_dir(tmp_path / "s") == summary_without_dir(tmp_path / "p")


def test_seed_changes_output(tmp_path):
    cfg = small_config(tmp_path, {"p_ii": [0.05], "p_ip": [0.05], "p_usg": [0.0]})
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
    assert (tmp_path / "a" / "point_0000.csv").read_text() != (tmp_path / "b" / "point_0000.csv").read_text()


def test_predict_single_point(tmp_path):
    assert main(["predict", "--p-ii", "0.02", "--p-ip", "0.01", "--p-usg", "0", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "predict.json").read_text())
    rows = {r["x"]: r for r in rep["predictions"][0]["t_x"]}
    assert rows[0.5]["t_x"] == pytest.approx(54.86, abs=0.05)
    t = [rows[x]["t_x"] for x in sorted(rows)]
    assert all(a < b for a, b in zip(t, t[1:]))


def test_predict_omits_levels_below_start(tmp_path):
    main(["predict", "--p-ii", "0.25", "--p-ip", "0.05", "--out", str(tmp_path)])
    rows = json.loads((tmp_path / "predict.json").read_text())["predictions"][0]["t_x"]
    for r in rows:
        assert (r["t_x"] is None) == (r["x"] <= 0.25)


def test_predict_t50_decreases_with_usg():
    cfg = JobConfig(command="predict", grid={"p_ii": [0.02], "p_ip": [0.01], "p_usg": [0.0, 0.03, 0.05, 0.07, 0.1]})
    preds = run_predict(cfg)["predictions"]
    t50 = [next(r["t_x"] for r in p["t_x"] if r["x"] == 0.5) for p in preds]
    assert all(a > b for a, b in zip(t50, t50[1:]))


def test_validate_tables(tmp_path):
    assert main(["validate-tables", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "validate_tables.json").read_text())
    assert rep["passed"]
    assert len(rep["rows"]) == 5


def test_gen_pop(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"population": {"n_total": 10000}}))
    assert main(["gen-pop", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    net = json.loads((tmp_path / "network.json").read_text())
    assert net["n_total"] == 10000
    rep = json.loads((tmp_path / "validation.json").read_text())["report"]
    assert [f for f in rep["flags"] if not f.startswith("a_shift")] == []
    assert rep["r_squared"] >= 0.9
    assert rep["n_groups"] == round(0.1 * 7000 / 10.196)


def test_gen_pop_small_population_flags_group_fit(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"population": {"n_total": 1000}}))
    assert main(["gen-pop", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "validation.json").read_text())["report"]
    assert any("group size fit failed" in f for f in rep["flags"])


def test_simulate_then_fit_and_infer(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--profile", "desk", "--p-ii", "0.02", "--p-ip", "0.02",
                 "--out", str(out)]) == 0
    series = BurnSeries.from_csv((out / "series.csv").read_text())
    assert len(series.f) == 101
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["population"]["n_total"] == 2000
    assert main(["fit", "--series", str(out / "series.csv"), "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["r_squared"] >= 0.98

    c = CurveCoefficients.from_initial(30.0, 0.97, 0.02)
    (tmp_path / "synth.csv").write_text(BurnSeries(eval_F(np.arange(101), c), 1000).to_csv())
    assert main(["infer", "--series", str(tmp_path / "synth.csv"), "--p-ii", "0.02",
                 "--out", str(tmp_path)]) == 0
    inf = json.loads((tmp_path / "infer.json").read_text())
    assert 0 <= inf["p_usg"] <= 0.1


def test_fit_failure_exit_code(tmp_path):
    (tmp_path / "flat.csv").write_text(BurnSeries(np.full(20, 0.02), 100).to_csv())
    assert main(["fit", "--series", str(tmp_path / "flat.csv"), "--out", str(tmp_path)]) == 1
    assert "error" in json.loads((tmp_path / "fit.json").read_text())


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"population": {"penetration": 2.0}}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spread": {"p_ii": 0.03, "p_ip": 0.04, "p_usg": 0.05}, "master_seed": 9}))
    main(["predict", "--config", str(cfg), "--p-ip", "0.06", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "predict.json").read_text())
    assert rep["config"]["spread"] == {"p_ii": 0.03, "p_ip": 0.06, "p_usg": 0.05}
    assert rep["config"]["master_seed"] == 9
