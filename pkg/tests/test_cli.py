import csv
import json

import numpy as np
import pytest

from kinetic_fluid.cli import EXIT_BLOWUP, EXIT_CONFIG, EXIT_IO, EXIT_OK, main

TINY = """
dim: 2
grid: 16
particles: 200
dt: 0.01
t_final: 0.2
init: {v_mean: [1.0, 0.0], fluid: {kind: random, amplitude: 0.5}}
diagnostics: {cadence: 2, p_list: [1, 2], q_list: [2], wasserstein_cadence: 10, wasserstein_subsample: 32}
seed: 3
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_outputs(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(tiny_config), "--out", str(out), "--threads", "1"]) == EXIT_OK
    rows = read_csv(out / "timeseries.csv")
    assert len(rows) == 11
    assert {"t", "mass", "momentum_0", "lyapunov", "w_bound_p1", "moment_p2", "w1_exact", "fq_q2"} <= set(rows[0])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["psi_min"] == 1.0 and summary["M0"] == 1.0
    assert summary["config"]["grid"] == 16
    assert summary["conservation"]["mass_drift"] == 0.0
    assert summary["version"]


def test_same_seed_bit_identical(tiny_config, tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(tiny_config), "--out", str(tmp_path / name), "--threads", "1"]) == 0
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()
    main(["simulate", "--config", str(tiny_config), "--out", str(tmp_path / "c"), "--seed", "4", "--threads", "1"])
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() != (tmp_path / "c" / "timeseries.csv").read_bytes()


def test_threads_from_environment(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("KINFLUID_THREADS", "2")
    assert main(["simulate", "--config", str(tiny_config), "--out", str(tmp_path / "r")]) == 0
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert summary["config"]["threads"] == 2
    assert main(["simulate", "--config", str(tiny_config), "--out", str(tmp_path / "s"), "--threads", "1"]) == 0
    assert json.loads((tmp_path / "s" / "summary.json").read_text())["config"]["threads"] == 1


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dt: -1\n")
    assert main(["simulate", "--config", str(bad)]) == EXIT_CONFIG
    assert "dt" in capsys.readouterr().err


def test_io_error_exit(tiny_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", str(tiny_config), "--out", str(blocker / "sub")]) == EXIT_IO


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_exit(tmp_path, capsys):
    cfg = tmp_path / "boom.yaml"
    cfg.write_text(TINY.replace("amplitude: 0.5", "amplitude: 1.0e+200"))
    out = tmp_path / "boom"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_BLOWUP
    assert "last valid t" in capsys.readouterr().err
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "blow-up"
    assert (out / "timeseries.csv").exists()


def test_fit_recomputes_summary_rate(tiny_config, tmp_path, capsys):
    out = tmp_path / "run"
    main(["simulate", "--config", str(tiny_config), "--out", str(out)])
    capsys.readouterr()
    assert main(["fit", "--csv", str(out / "timeseries.csv"), "--column", "lyapunov", "--tmin", "0"]) == 0
    fit = json.loads(capsys.readouterr().out)
    rows = read_csv(out / "timeseries.csv")
    t = np.array([float(r["t"]) for r in rows])
    y = np.array([float(r["lyapunov"]) for r in rows])
    slope = np.polyfit(t, np.log(y), 1)[0]
    assert fit["rate"] == pytest.approx(-slope, rel=1e-10)


def test_fit_unknown_column(tiny_config, tmp_path):
    out = tmp_path / "run"
    main(["simulate", "--config", str(tiny_config), "--out", str(out)])
    assert main(["fit", "--csv", str(out / "timeseries.csv"), "--column", "nope"]) == EXIT_CONFIG


def test_wasserstein_command(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text("0.5 0 0 0 0\n0.5 0 0 1 0\n")
    b.write_text("0.5 0 0 0 0\n0.5 0 0 3 0\n")
    assert main(["wasserstein", "--a", str(a), "--b", str(b), "--p", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.0)
    assert main(["wasserstein", "--a", str(a), "--b", str(b), "--p", "inf"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2.0)


def test_wasserstein_mass_mismatch(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text("1.0 0 0\n")
    b.write_text("0.5 0 0\n")
    assert main(["wasserstein", "--a", str(a), "--b", str(b), "--p", "1"]) == EXIT_CONFIG


def test_wasserstein_missing_file(tmp_path):
    assert main(["wasserstein", "--a", str(tmp_path / "x"), "--b", str(tmp_path / "y"), "--p", "1"]) == EXIT_IO


def test_heat_kernel_command(tmp_path):
    out = tmp_path / "hk.csv"
    assert main(["heat-kernel", "--d", "2", "--p-list", "1,2,inf", "--t-grid", "0.5 1 2 4", "--n", "64", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 * 3 * 4
    assert {"t", "p", "measured", "envelope", "ratio"} <= set(rows[0])
    for r in rows:
        assert float(r["ratio"]) == pytest.approx(float(r["measured"]) / float(r["envelope"]))
