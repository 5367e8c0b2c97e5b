"""Batch CLI: config handling, ingestion, subcommands, exit codes."""

import json
import os
import subprocess

import numpy as np
import pytest

from netcox import cli
from netcox.errors import ConfigurationError, DataError
from netcox.simulate import EventLog


def write_cfg(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


# ------------------------------------------------------------- config


def test_load_config_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    write_cfg(path, {"a": {"b": 1}, "h": 0.25})
    cfg = cli.load_config(path, ["a.b=2", "h=0.5", "kernel=epanechnikov",
                                 "flag=true", "grid=[1, 2]", "new.deep=7"])
    assert cfg["a"]["b"] == 2
    assert cfg["h"] == 0.5
    assert cfg["kernel"] == "epanechnikov"  # raw string fallback
    assert cfg["flag"] is True
    assert cfg["grid"] == [1, 2]
    assert cfg["new"] == {"deep": 7}


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        cli.load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        cli.load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigurationError, match="JSON object"):
        cli.load_config(arr)
    ok = tmp_path / "ok.json"
    write_cfg(ok, {"h": 0.25})
    with pytest.raises(ConfigurationError, match="key=value"):
        cli.load_config(ok, ["noequals"])
    with pytest.raises(ConfigurationError, match="hits a leaf"):
        cli.load_config(ok, ["h.sub=1"])


def test_resolve_path(tmp_path, monkeypatch):
    monkeypatch.delenv("NETCOX_DATA_DIR", raising=False)
    assert cli.resolve_path("x.csv") == "x.csv"
    monkeypatch.setenv("NETCOX_DATA_DIR", str(tmp_path))
    assert cli.resolve_path("x.csv") == os.path.join(str(tmp_path), "x.csv")
    assert cli.resolve_path("/abs/x.csv") == "/abs/x.csv"


# ----------------------------------------------------------- ingestion


def test_ingest_events_float_window(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("time,i,j\n"
                    "0.5,a,b\n"
                    "1.5,b,c\n"
                    "0.25,a,a\n"
                    "5.0,a,b\n"
                    "1.0,c,a\n")
    log, registry, report = cli.ingest_events(path, (0.0, 2.0))
    assert log.horizon == 2.0
    assert registry == {"a": 0, "b": 1, "c": 2}
    assert report == {"rows": 5, "events": 3, "unparseable": 0,
                      "self_loops": 1, "outside_window": 1}
    assert log.pairs() == [(0, 1), (0, 2), (1, 2)]
    assert list(log.events((0, 2))) == [1.0]  # c->a sorted undirected


def test_ingest_events_directed_and_registry_sharing(tmp_path):
    first = tmp_path / "one.csv"
    first.write_text("time,i,j\n0.5,a,b\n")
    second = tmp_path / "two.csv"
    second.write_text("time,i,j\n0.75,b,a\n0.25,c,a\n")
    _, registry, _ = cli.ingest_events(first, (0.0, 1.0), directed=True)
    log, registry, _ = cli.ingest_events(second, (0.0, 1.0), directed=True,
                                         registry=registry)
    assert registry == {"a": 0, "b": 1, "c": 2}
    assert log.pairs() == [(1, 0), (2, 0)]  # direction preserved


def test_ingest_events_iso_with_column_remap(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("started_at,start_id,end_id\n"
                    "2026-05-01T00:30:00,s1,s2\n"
                    "2026-05-01T01:30:00,s2,s3\n")
    log, _, report = cli.ingest_events(
        path, ("2026-05-01T00:00:00", "2026-05-01T02:00:00"),
        time_format="iso",
        columns={"time": "started_at", "origin": "start_id", "dest": "end_id"})
    assert log.horizon == 2.0  # hours by default
    assert report["events"] == 2
    times = sorted(t for p in log.pairs() for t in log.events(p))
    assert times == [0.5, 1.5]


def test_ingest_events_epoch_unit_default(tmp_path):
    path = tmp_path / "trips.csv"
    path.write_text("time,i,j\n1003600,a,b\n")
    log, _, _ = cli.ingest_events(path, (1000000, 1007200),
                                  time_format="epoch")
    assert log.horizon == 2.0
    assert list(log.events((0, 1))) == [1.0]


def test_ingest_events_too_many_bad_rows(tmp_path):
    path = tmp_path / "trips.csv"
    rows = ["time,i,j"] + ["0.5,a,b"] * 8 + ["oops,x,y", ",p,q"]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataError, match="unparseable"):
        cli.ingest_events(path, (0.0, 1.0))


def test_ingest_events_missing_file_and_empty_window(tmp_path):
    with pytest.raises(DataError, match="cannot open"):
        cli.ingest_events(tmp_path / "nope.csv", (0.0, 1.0))
    path = tmp_path / "trips.csv"
    path.write_text("time,i,j\n0.5,a,b\n")
    with pytest.raises(ConfigurationError, match="empty ingestion window"):
        cli.ingest_events(path, (1.0, 1.0))


def test_build_conservative_network():
    prior = EventLog(2.0, times={(0, 1): [0.1, 0.2, 0.3], (1, 2): [0.5]})
    net = cli.build_conservative_network(prior, threshold=2, horizon=1.5)
    assert net.n == 3 and net.horizon == 1.5
    assert net.pairs() == [(0, 1)]
    assert list(net.activity((0, 1))) == [(0.0, 1.5)]
    with pytest.raises(ConfigurationError, match=">= 1"):
        cli.build_conservative_network(prior, threshold=0, horizon=1.0)
    empty = cli.build_conservative_network(EventLog(1.0), 1, 1.0)
    assert empty.n == 2 and empty.pairs() == []


def test_distance_covariates():
    cov = cli.distance_covariates({(0, 1): float(np.exp(2)), (1, 2): 0.5})
    np.testing.assert_allclose(cov.eval((0, 1), 0.0), [1.0, 2.0, 4.0],
                               rtol=1e-12)
    np.testing.assert_allclose(cov.eval((1, 2), 0.0), [1.0, 0.0, 0.0])
    with pytest.raises(ConfigurationError, match="positive"):
        cli.distance_covariates({(0, 1): 0.0})
    with pytest.raises(ConfigurationError, match="no duration"):
        cli.distance_covariates({(0, 1): 5.0}, pairs=[(0, 1), (2, 3)])


# ------------------------------------------------------------- pipeline


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    cfg = base / "sim.json"
    write_cfg(cfg, {"seed": 3, "n": 12, "edge_prob": 0.5, "horizon": 1.0,
                    "theta": {"constant": [0.5, 0.5]}})
    out = base / "sim"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def input_cfg(sim_dir, **extra):
    cfg = {"network": str(sim_dir / "network.csv"),
           "events": str(sim_dir / "events.csv"),
           "covariates": {"kind": "csv",
                          "path": str(sim_dir / "covariates.csv")}}
    cfg.update(extra)
    return cfg


def test_simulate_outputs_and_manifest(sim_dir):
    for name in ("network.csv", "covariates.csv", "events.csv",
                 "manifest.json"):
        assert (sim_dir / name).exists()
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["backend"] in ("cython", "python")
    assert len(manifest["outputs"]) == 3
    assert set(manifest["versions"]) == {"netcox", "numpy", "scipy", "python"}


def test_estimate_subcommand(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "est.json"
    write_cfg(cfg, input_cfg(sim_dir, h=0.25))
    out = tmp_path / "est"
    assert cli.main(["estimate", "--config", str(cfg),
                     "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert stdout.count("wrote") == 3  # two artifacts plus the manifest
    gfit = json.loads((out / "global_fit.json").read_text())
    assert len(gfit["theta_bar"]) == 2
    assert gfit["kernel"] == "epanechnikov"
    lines = (out / "theta_path.csv").read_text().splitlines()
    assert lines[0] == "t0,theta_1,theta_2,converged,iters"
    t0s = [float(l.split(",")[0]) for l in lines[1:]]
    assert t0s[0] == 0.25 and t0s[-1] == 0.75  # interior anchors only


def test_estimate_explicit_grid(sim_dir, tmp_path):
    cfg = tmp_path / "est.json"
    write_cfg(cfg, input_cfg(sim_dir, h=0.25, t0_grid=[0.3, 0.5, 0.7]))
    out = tmp_path / "est"
    assert cli.main(["estimate", "--config", str(cfg),
                     "--out", str(out)]) == 0
    lines = (out / "theta_path.csv").read_text().splitlines()
    assert len(lines) == 4


def test_test_subcommand(sim_dir, tmp_path):
    cfg = tmp_path / "test.json"
    write_cfg(cfg, input_cfg(sim_dir, h=0.25))
    out = tmp_path / "gof"
    assert cli.main(["test", "--config", str(cfg), "--out", str(out)]) == 0
    result = json.loads((out / "test_result.json").read_text())
    assert 0.0 <= result["p_value"] <= 1.0
    assert result["h"] == 0.25 and result["kernel"] == "epanechnikov"
    assert result["tn"] >= 0.0 and result["b"] > 0.0
    for name in ("test_result.csv", "theta_path.csv", "weight.csv"):
        assert (out / name).exists()
    header = (out / "test_result.csv").read_text().splitlines()[0]
    assert header.startswith("tn,an,b,z,p_value")


def test_bandwidth_subcommand(sim_dir, tmp_path):
    cfg = tmp_path / "bw.json"
    write_cfg(cfg, input_cfg(sim_dir, h_grid=[0.15, 0.2, 0.3]))
    out = tmp_path / "bw"
    assert cli.main(["bandwidth", "--config", str(cfg),
                     "--out", str(out)]) == 0
    payload = json.loads((out / "bandwidth.json").read_text())
    assert payload["h_star"] in (0.15, 0.2, 0.3)
    lines = (out / "bandwidth.csv").read_text().splitlines()
    assert lines[0] == "h,error" and len(lines) == 4


def test_partition_check_chessboard(tmp_path):
    cfg = tmp_path / "part.json"
    write_cfg(cfg, {"method": "chessboard", "delta": 2,
                    "grid": {"rows": 6, "cols": 6}})
    out = tmp_path / "part"
    assert cli.main(["partition-check", "--config", str(cfg),
                     "--out", str(out)]) == 0
    report = json.loads((out / "partition_report.json").read_text())
    assert report["ok"] is True
    assert report["coverage"] == 1.0
    assert report["method"] == "chessboard" and report["delta"] == 2.0
    header = (out / "partition.csv").read_text().splitlines()[0]
    assert header == "i,j,k,m"


def test_partition_check_mds(tmp_path):
    cfg = tmp_path / "part.json"
    write_cfg(cfg, {"method": "mds", "delta": 2, "dim": 2,
                    "grid": {"rows": 4, "cols": 4}})
    out = tmp_path / "part"
    assert cli.main(["partition-check", "--config", str(cfg),
                     "--out", str(out)]) == 0
    report = json.loads((out / "partition_report.json").read_text())
    assert report["method"] == "mds"
    assert report["achieved_delta"] >= 1.0


def test_mc_calibration_h0(tmp_path):
    cfg = tmp_path / "mc.json"
    write_cfg(cfg, {"mode": "h0", "reps": 3, "seed": 11, "n": 10,
                    "horizon": 1.0, "h": 0.25})
    out = tmp_path / "mc"
    assert cli.main(["mc-calibration", "--config", str(cfg),
                     "--out", str(out)]) == 0
    res = json.loads((out / "mc_h0.json").read_text())
    assert res["reps"] == 3 and res["completed"] <= 3
    assert 0.0 <= res["rejection_rate"] <= 1.0
    lines = (out / "mc_h0_pvalues.csv").read_text().splitlines()
    assert lines[0] == "rep,p_value,z"
    assert len(lines) == 1 + res["completed"]


def test_mc_calibration_variance(tmp_path):
    cfg = tmp_path / "mc.json"
    write_cfg(cfg, {"mode": "variance", "reps": 2, "seed": 13, "n": 10,
                    "horizon": 1.0, "h": 0.25})
    out = tmp_path / "mc"
    assert cli.main(["mc-calibration", "--config", str(cfg),
                     "--out", str(out)]) == 0
    res = json.loads((out / "mc_variance.json").read_text())
    assert res["mean_plugin"] > 0 and res["mean_martingale"] > 0
    lines = (out / "mc_variance_reps.csv").read_text().splitlines()
    assert lines[0] == "rep,plugin,martingale"


def test_set_override_reaches_manifest(tmp_path):
    cfg = tmp_path / "sim.json"
    write_cfg(cfg, {"seed": 3, "n": 12, "horizon": 1.0})
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out),
                     "--set", "seed=9", "--set", "n=6"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 9


# ------------------------------------------------------------ exit codes


def test_exit_code_argparse():
    assert cli.main(["no-such-command"]) == 2
    assert cli.main([]) == 2


def test_exit_code_help(capsys):
    assert cli.main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_exit_code_config_problems(sim_dir, tmp_path, capsys):
    missing = tmp_path / "none.json"
    assert cli.main(["simulate", "--config", str(missing)]) == 2
    assert "configuration error" in capsys.readouterr().err
    cfg = tmp_path / "est.json"
    write_cfg(cfg, input_cfg(sim_dir))  # no h
    assert cli.main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2


def test_exit_code_data_problems(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "est.json"
    payload = input_cfg(sim_dir, h=0.25)
    payload["events"] = str(tmp_path / "missing_events.csv")
    write_cfg(cfg, payload)
    assert cli.main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 3
    assert "data error" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_exit_code_numeric_failure(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    write_cfg(cfg, {"seed": 1, "n": 6, "horizon": 1.0,
                    "theta": {"constant": [10000.0, 0.0]}})
    assert cli.main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 4
    assert "numeric failure" in capsys.readouterr().err


def test_console_script_help():
    proc = subprocess.run(["netcox", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
