import json
import math
import subprocess
import sys

import numpy as np
import pytest

from macalloc import bench
from macalloc.bench import ExperimentConfig
from macalloc.cli import main
from macalloc.drl.checkpoint import save_checkpoint
from macalloc.drl.env import EnvConfig
from macalloc.drl.ppo import PpoConfig, PpoModel
from macalloc.errors import ConfigError

SMALL = dict(snr_db=(0.0, 20.0), seeds=(0, 1), user_distances=(2.0, 3.0, 5.0))


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=())
    with pytest.raises(ConfigError):
        ExperimentConfig(snr_db=())
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("magic",))
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("drl",))
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="target")
    assert ExperimentConfig().energy_budget == 3.0


def test_load_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("methods: [minpmac]\nsnr_db: [10]\n")
    assert bench.load_config(p).methods == ("minpmac",)
    p.write_text("methods: [minpmac]\nsnr: [10]\n")
    with pytest.raises(ConfigError):
        bench.load_config(p)


def test_empty_seed_list_gives_empty_table():
    assert bench.sweep_snr(ExperimentConfig(seeds=())) == []


def test_sweep_rows_and_dominance():
    cfg = ExperimentConfig(methods=("minpmac", "timeshare", "oma", "noma"), **SMALL)
    rows = bench.sweep_snr(cfg)
    assert len(rows) == 4 * 2 * 2
    assert all(r["status"] == "ok" for r in rows)
    for r in rows:
        assert r["energy"] <= cfg.energy_budget * (1 + 1e-9)
        assert r["sum_rate_mbps"] == pytest.approx(sum(r[f"rate{i}_mbps"] for i in range(3)))
    means = bench.summarize(rows)
    for snr in cfg.snr_db:
        assert means[("minpmac", snr)] >= means[("oma", snr)]
        assert means[("minpmac", snr)] >= means[("noma", snr)]
        # the max-min time-share redistributes the same sum rate
        assert means[("timeshare", snr)] == pytest.approx(means[("minpmac", snr)], rel=1e-9)


def test_target_mode_and_errors_recorded():
    cfg = ExperimentConfig(methods=("minpmac", "oma", "brute"), mode="target", targets_mbps=(40.0, 40.0, 40.0),
                           snr_db=(20.0,), seeds=(0,), brute_levels=10)
    rows = bench.sweep_snr(cfg)
    status = {r["method"]: r["status"] for r in rows}
    assert status["minpmac"] == "ok" and status["oma"] == "ok"
    assert status["brute"] == "skipped"  # N*S = 12 is past the grid guard
    ok = {r["method"]: r for r in rows if r["status"] == "ok"}
    assert ok["minpmac"]["energy"] <= ok["oma"]["energy"]


def test_fair_timeshare_max_min():
    w, t = bench.fair_timeshare(np.array([[2.0, 0.0], [0.0, 2.0]]))
    assert np.allclose(w, [0.5, 0.5]) and t == pytest.approx(1.0)


def test_outage_trivial_floors():
    cfg = ExperimentConfig(methods=("minpmac", "oma", "noma"), **SMALL)
    assert all(r["outage"] == 0.0 for r in bench.outage_curve(cfg, 0.0))
    assert all(r["outage"] == 1.0 for r in bench.outage_curve(cfg, math.inf))


def test_outage_curve_monotone_and_bounded():
    cfg = ExperimentConfig(methods=("minpmac", "noma"), snr_db=(0.0, 10.0, 20.0, 30.0), seeds=tuple(range(6)),
                           user_distances=(2.0, 3.0, 5.0), rate_floor_mbps=100.0)
    rows = bench.outage_curve(cfg)
    assert all(0.0 <= r["outage"] <= 1.0 for r in rows)
    assert bench.monotonicity_violations(rows)["minpmac"] == []
    # the optimum is never in outage when a heuristic is not
    by = {(r["method"], r["snr_db"]): r["outage"] for r in rows}
    assert all(by[("minpmac", s)] <= by[("noma", s)] for s in cfg.snr_db)


def test_monotonicity_violation_report():
    rows = [{"method": "a", "snr_db": s, "outage": o} for s, o in ((0, 1.0), (10, 0.5), (20, 0.6), (30, 0.0))]
    assert bench.monotonicity_violations(rows) == {"a": [20]}


def test_spread():
    assert bench.spread([1.0, 1.0]) == 0.0
    assert bench.spread([0.0, 0.0]) == 0.0
    assert bench.spread([1.0, 3.0]) == pytest.approx(1.0)


def test_export_round_trip(tmp_path):
    rows = [{"method": "x", "snr_db": 0.1 + 0.2, "seed": 3, "ok": True, "v": [1.0, 2.5]},
            {"method": "y", "snr_db": math.pi, "seed": 4, "ok": False, "v": [0.0]}]
    for fmt in ("csv", "tsv"):
        path = bench.export_results(rows, tmp_path / f"r.{fmt}", fmt)
        back = bench.read_results(path, fmt)
        assert [r["snr_db"] for r in back] == [0.1 + 0.2, math.pi]
        assert [r["seed"] for r in back] == [3, 4]
        assert [r["ok"] for r in back] == [True, False]
        assert json.loads(back[0]["v"]) == [1.0, 2.5]
    with pytest.raises(ConfigError):
        bench.export_results(rows, tmp_path / "r.x", "xml")


def test_plot_script_reads_its_data(tmp_path):
    cfg = ExperimentConfig(methods=("oma",), snr_db=(10.0,), seeds=(0,))
    data = bench.export_results(bench.sweep_snr(cfg), tmp_path / "data" / "sweep.csv")
    script = bench.emit_plot_script(data, tmp_path / "plots" / "plot.py", "sweep")
    text = script.read_text()
    assert "../data/sweep.csv" in text
    compile(text, str(script), "exec")
    pytest.importorskip("matplotlib")
    subprocess.run([sys.executable, str(script)], check=True, cwd="/")
    assert (tmp_path / "plots" / "sweep.png").exists()


def test_manifest(tmp_path):
    path = bench.write_manifest(tmp_path / "m.json", ExperimentConfig(), ratio=np.float64(0.5), arr=np.arange(2))
    meta = json.loads(path.read_text())
    assert meta["ratio"] == 0.5 and meta["arr"] == [0, 1]
    assert meta["config"]["methods"] == ["minpmac", "oma", "noma"]


@pytest.fixture
def agents(tmp_path):
    env = EnvConfig(horizon=8)
    paths = {}
    for label, seed in (("drl_fair", 0), ("drl_nofair", 1)):
        model = PpoModel.create(env.obs_dim, env.num_heads, env.levels, PpoConfig(seed=seed, hidden=8))
        paths[label] = str(tmp_path / f"{label}.ckpt")
        save_checkpoint(model, paths[label], env)
    return paths


def test_drl_methods_in_sweep_timing_and_ablation(agents):
    cfg = ExperimentConfig(methods=("minpmac", "drl"), snr_db=(10.0,), seeds=(0, 1), drl_checkpoints=agents,
                           drl_steps=3, timing_repeats=3)
    rows = bench.sweep_snr(cfg)
    assert {r["method"] for r in rows} == {"minpmac", "drl_fair", "drl_nofair"}
    assert all(r["status"] == "ok" for r in rows)
    t = {r["method"]: r for r in bench.timing_compare(cfg)}
    assert t["minpmac"]["speedup_vs_minpmac"] == 1.0
    assert t["drl_fair"]["seconds"] > 0
    res = bench.fairness_ablation(cfg, "drl_fair", "drl_nofair")
    assert len(res["rows"]) == 4
    assert set(res["summary"]) == {"stats", "spread_decreases", "sum_rate_not_higher"}


# --- command line ---------------------------------------------------------------------


def test_cli_generate_and_solve(tmp_path, capsys):
    ch = tmp_path / "ch.txt"
    assert main(["gen-channels", "--users", "2", "--tones", "2", "--snr-db", "10", "--seed", "3",
                 "--out", str(ch)]) == 0
    out = tmp_path / "sol.json"
    assert main(["solve", "--channels", str(ch), "--rth-mbps", "30,20", "--out", str(out)]) == 0
    sol = json.loads(out.read_text())
    assert np.all(np.asarray(sol["achieved_mbps"]) >= np.array([30.0, 20.0]) - 1e-4)
    assert sol["diagnostics"]["converged"]
    for method in ("oma", "noma", "brute"):
        assert main(["baseline", "--channels", str(ch), "--rth-mbps", "30,20", "--method", method,
                     "--levels", "60", "--out", str(tmp_path / f"{method}.json")]) == 0
        res = json.loads((tmp_path / f"{method}.json").read_text())
        assert res["objective"] >= sol["objective"] * (1 - 1e-6)


def test_cli_reports_errors(tmp_path, capsys):
    ch = tmp_path / "ch.txt"
    main(["gen-channels", "--users", "2", "--tones", "2", "--out", str(ch)])
    assert main(["solve", "--channels", str(ch), "--rth-mbps", "30"]) == 2
    assert "2 users" in capsys.readouterr().err
    assert main(["solve", "--channels", str(tmp_path / "nope.txt"), "--rth-mbps", "1,1"]) == 2


def test_cli_sweep_writes_outputs(tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text("methods: [minpmac, oma]\nsnr_db: [0, 20]\nseeds: [0, 1]\n")
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 0
    for name in ("sweep.csv", "plot_sweep.py", "sweep_manifest.json"):
        assert (tmp_path / "out" / name).exists()
    assert len(bench.read_results(tmp_path / "out" / "sweep.csv")) == 8
