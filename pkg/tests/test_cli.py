import json
import subprocess
import sys

import numpy as np
import pytest

from stabprune.cli import main, read_config


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}


def test_simulate_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "a"
    assert main(["simulate", "--scenario", "s2", "--n", "100", "--p", "50", "--rho", "0", "--seed", "7",
                 "--out", str(out)]) == 0
    lines = (out / "data.csv").read_text().splitlines()
    assert len(lines) == 101
    assert len(lines[0].split(",")) == 51
    meta = json.loads((out / "data.json").read_text())
    assert meta["beta_true"][:5] == [0.5, 1.0, 1.5, 2.0, 2.5]
    assert meta["sigma"] == 1.0
    assert meta["seed"] == 7
    assert meta["config"]["scenario"] == "s2"
    assert meta["generator"]["bit_generator"] == "PCG64"


def test_simulate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--scenario", "s1v4", "--seed", "3", "--out", str(tmp_path / name)]) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    meta = json.loads((tmp_path / "a" / "data.json").read_text())
    assert meta["sigma"] == 2.0


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["simulate", "--scenario", "nope"]) == 1
    assert "s1v1" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["bench", "--M", "notanumber"])
    assert e.value.code == 1
    assert main(["run", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
    assert main(["run", "--scenario", "s2", "--mode", "magic", "--out", str(tmp_path)]) == 1
    assert main(["run", "--scenario", "s2", "--pi-thr", "0.4", "--out", str(tmp_path)]) == 1
    assert main(["run", "--scenario", "s2", "--fraction", "0", "--out", str(tmp_path)]) == 1
    assert main(["bench", "--scenario", "s2", "--M", "0", "--out", str(tmp_path)]) == 1
    assert main(["bench", "--scenario", "s2", "--methods", "scad", "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--scenario", "s2", "--threads", "0", "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_2(tmp_path):
    f = tmp_path / "flat.csv"
    # response orthogonal to the only predictor: lambda_max = 0
    f.write_text("x,y\n1,1\n-1,1\n1,-1\n-1,-1\n")
    assert main(["run", "--data", str(f), "--q-target", "1", "--out", str(tmp_path / "o")]) == 2


def test_run_modes_and_outputs(tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--scenario", "s2", "--n", "60", "--p", "20", "--seed", "1", "--out", str(sim)])
    common = ["--data", str(sim / "data.csv"), "--B", "20", "--K", "20", "--seed", "5"]
    assert main(["run", *common, "--mode", "pruned", "--save-members", "--dump-path", "--out", str(tmp_path / "p")]) == 0
    assert main(["run", *common, "--mode", "pruned", "--fraction", "1", "--out", str(tmp_path / "p1")]) == 0
    assert main(["run", *common, "--mode", "stabsel", "--out", str(tmp_path / "s")]) == 0
    assert main(["run", *common, "--mode", "lasso-baseline", "--out", str(tmp_path / "l")]) == 0

    p = json.loads((tmp_path / "p" / "result.json").read_text())
    s = json.loads((tmp_path / "s" / "result.json").read_text())
    p1 = json.loads((tmp_path / "p1" / "result.json").read_text())
    assert p1["selected"] == s["selected"]
    assert p["U"] == 7
    assert p["config"]["B"] == 20 and p["config"]["pi_thr"] == 0.7 and p["config"]["q_target"] == 6
    assert p["pfer_bound"] == pytest.approx(36 / (0.4 * 20))
    assert p["reference"]["reference"] == "stepwise"
    assert set(p) >= {"selected", "pi_hat", "pfer_bound", "grid", "objective"}
    header = (tmp_path / "p" / "ordering.csv").read_text().splitlines()[0]
    assert header == "step,member_index,ensemble_loss"
    assert len((tmp_path / "p" / "ordering.csv").read_text().splitlines()) == 21
    assert (tmp_path / "p" / "members.npz").exists()
    assert (tmp_path / "p" / "path.csv").exists()
    assert (tmp_path / "p" / "frequencies.csv").read_text().startswith("variable,name,pi_hat,selected\n")
    lasso = json.loads((tmp_path / "l" / "result.json").read_text())
    assert "lambda_index" in lasso and "pi_hat" not in lasso


def test_run_from_scenario_equals_run_from_simulated_csv(tmp_path):
    main(["simulate", "--scenario", "s2", "--n", "60", "--p", "20", "--seed", "2", "--out", str(tmp_path / "sim")])
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--scenario", "s2", "--n", "60", "--p", "20", "--seed", "2", "--B", "10", "--K", "10", "--out", str(a)])
    main(["run", "--data", str(tmp_path / "sim" / "data.csv"), "--seed", "2", "--B", "10", "--K", "10", "--out", str(b)])
    ra = json.loads((a / "result.json").read_text())
    rb = json.loads((b / "result.json").read_text())
    assert ra["selected"] == rb["selected"]
    assert ra["pi_hat"] == rb["pi_hat"]


def test_config_precedence_and_replay(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# bench settings\nscenario = s2\nn = 50\np = 20\nM = 2\nB = 6\nK = 8\nn_test = 300\nseed = 9\n")
    out1, out2, out3 = tmp_path / "1", tmp_path / "2", tmp_path / "3"
    assert main(["bench", "--config", str(cfg), "--B", "8", "--out", str(out1)]) == 0
    meta = json.loads((out1 / "bench.json").read_text())
    assert meta["config"]["B"] == 8  # flag beats file
    assert meta["config"]["K"] == 8  # file beats default
    assert meta["config"]["seed"] == 9
    # replay from the output's own metadata
    assert main(["bench", "--config", str(out1 / "bench.json"), "--out", str(out2)]) == 0
    assert files(out1) == files(out2)
    assert main(["bench", "--config", str(out1 / "bench.json"), "--threads", "3", "--out", str(out3)]) == 0
    assert files(out1) == files(out3)
    timing = json.loads((out1 / "timing.json").read_text())
    assert timing["seed"] == 9 and timing["wall_clock_seconds"] > 0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(bad)]) == 1
    bad.write_text("just words\n")
    assert main(["simulate", "--config", str(bad)]) == 1
    assert main(["simulate", "--config", str(tmp_path / "nope.txt")]) == 1


def test_read_config_formats(tmp_path):
    t = tmp_path / "a.txt"
    t.write_text("pi-thr = 0.6\nmethods = stabsel,pruned\n")
    assert read_config(t) == {"pi_thr": "0.6", "methods": "stabsel,pruned"}
    j = tmp_path / "b.json"
    j.write_text(json.dumps({"config": {"B": 5}, "other": 1}))
    assert read_config(j) == {"B": 5}


def test_bench_table_layout(tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["bench", "--scenario", "s2", "--n", "50", "--p", "20", "--M", "1", "--B", "6", "--K", "8",
                 "--n-test", "200", "--methods", "stabsel,pruned,lasso", "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "method,p0,p1,acc,fdr,perr_mean,perr_std,M"
    assert [l.split(",")[0] for l in lines[1:]] == ["stabsel", "pruned", "lasso"]
    assert "PErr" in capsys.readouterr().out


def test_bench_semisynthetic(tmp_path):
    rng = np.random.default_rng(0)
    np.savetxt(tmp_path / "X.csv", rng.standard_normal((60, 12)), delimiter=",")
    out = tmp_path / "o"
    assert main(["bench", "--design", str(tmp_path / "X.csv"), "--s", "2", "--snr", "3", "--M", "2", "--B", "6",
                 "--K", "8", "--out", str(out)]) == 0
    assert main(["bench", "--design", str(tmp_path / "X.csv"), "--M", "2", "--out", str(out)]) == 1
    assert main(["bench", "--design", str(tmp_path / "X.csv"), "--s", "2", "--M", "2", "--out", str(out)]) == 1


def test_order_curve_outputs(tmp_path):
    out = tmp_path / "c"
    assert main(["order-curve", "--scenario", "s1v1", "--M", "2", "--pools", "6,12", "--K", "10",
                 "--q-target", "4", "--out", str(out)]) == 0
    rows = (out / "curve.csv").read_text().splitlines()
    assert rows[0] == "pool_size,U,ordered_acc,unordered_acc"
    assert len(rows) == 1 + 6 + 12
    meta = json.loads((out / "curve.json").read_text())
    assert meta["config"]["B"] == 12
    assert meta["config"]["pi_thr"] == 0.6
    assert set(meta["summary"]) == {"6", "12"}


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "stabprune.cli", "simulate", "--scenario", "nope", "--out",
                        str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 1
