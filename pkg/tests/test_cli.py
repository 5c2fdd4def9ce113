import csv
import json

import numpy as np
import pytest
import yaml

from pqmon import __version__
from pqmon.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from pqmon.io import ingest_stream, streams_to_array
from pqmon.simnet import DetectorSpec, run_streams

CONFIG = {
    "seed": 3,
    "scenario": {
        "noise": {"sigma_nu": 1.0},
        "t0": 100,
        "horizon": 400,
        "meters": [{"kind": "ar", "coeffs": [0.9], "sigma_w": 1.0, "count": 3}],
    },
    "detector": {"b": 0.5, "h": 7.6},
}


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text(yaml.safe_dump(CONFIG), encoding="utf-8")
    return path


def rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_simulate_writes_outcome_and_trace(tmp_path, cfg):
    out = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--spec", "elts", "--seed", "7", "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"outcome.json", "trace.csv", "stream.csv", "messages.csv", "central_trace.csv", "manifest.json"} <= names
    outcome = json.loads((out / "outcome.json").read_text())
    assert outcome["spec"] == "elts" and outcome["t0"] == 100
    trace = rows(out / "trace.csv")
    assert list(trace[0]) == ["tick", "meter_0", "meter_1", "meter_2", "global", "reset_flag"]
    assert len(trace) == outcome["ticks_run"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == __version__ and manifest["config"]["seed"] == 3
    assert "--out" not in manifest["argv"]


def test_simulate_json_variant(tmp_path, cfg):
    out = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--spec", "gllr", "--seed", "1", "--json",
                 "--out", str(out)]) == EXIT_OK
    assert (out / "trace.json").exists() and not (out / "trace.csv").exists()
    trace = json.loads((out / "trace.json").read_text())
    assert trace["kind"] == "single" and len(trace["statistic"]) == len(trace["ticks"])
    # the single-meter detector reads only the first meter
    assert len(rows(out / "stream.csv")[0]) == 2


def test_detect_end_to_end(tmp_path, cfg, capsys):
    sim = tmp_path / "sim"
    main(["simulate", "--config", str(cfg), "--spec", "cgllr", "--seed", "4", "--out", str(sim)])
    capsys.readouterr()
    out = tmp_path / "det"
    assert main(["detect", "--input", str(sim / "stream.csv"), "--spec", "gllr", "--b", "0.5", "--h", "7.6",
                 "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out.strip()
    data = streams_to_array(ingest_stream(sim / "stream.csv"))[:1]
    expected = run_streams(data, DetectorSpec.from_name("gllr", b=0.5, h=7.6))
    assert printed == f"alarm_tick={expected.alarm_tick if expected.alarm_tick is not None else 'none'}"
    assert rows(out / "trace.csv")[0].keys() == {"tick", "statistic", "reset_flag"}


def test_evaluate_row_count(tmp_path):
    out = tmp_path / "e"
    assert main(["evaluate", "--curve", "delay-vs-far", "--gammas", "100,500,2000", "--trials", "500",
                 "--seed", "1", "--out", str(out)]) == EXIT_OK
    r = rows(out / "results.csv")
    assert list(r[0])[:10] == ["spec", "gamma", "h", "L", "mean_delay", "mean_far", "mean_tau_pre",
                               "mean_tau_post", "trials", "censored"]
    specs = {x["spec"] for x in r}
    assert len(specs) == 5
    for s in specs:
        assert sum(x["spec"] == s for x in r) == 3


def test_evaluate_far_rule_json(tmp_path):
    out = tmp_path / "e"
    assert main(["evaluate", "--curve", "far-rule", "--specs", "gllr", "--gammas", "100", "--trials", "50",
                 "--seed", "0", "--json", "--out", str(out)]) == EXIT_OK
    (row,) = json.loads((out / "results.json").read_text())
    assert row["spec"] == "gllr" and row["mean_far"] > 0


def test_tune_report(tmp_path, cfg):
    out = tmp_path / "t"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "tuning.json").read_text())
    assert {"rho", "b", "h", "delta", "achieved_tau0"} <= set(rep)
    assert len(rep["rho"]) == 3 and rep["b"] == pytest.approx(np.mean(rep["rho"]))
    assert rep["achieved_tau0"] == pytest.approx(14.0, rel=0.05)


def test_compare_small(tmp_path):
    out = tmp_path / "c"
    assert main(["compare", "--specs", "cgllr,elts", "--trials", "40", "--cal-trials", "40", "--gamma", "200",
                 "--seed", "2", "--out", str(out)]) == EXIT_OK
    assert [x["spec"] for x in rows(out / "compare.csv")] == ["cgllr", "elts"]


@pytest.mark.parametrize("argv", [
    ["simulate", "--spec", "elts", "--bogus"],
    ["simulate", "--spec", "nope", "--seed", "1"],
    ["simulate", "--config", "/nonexistent.cfg", "--spec", "elts", "--seed", "1"],
    ["evaluate", "--curve", "delay-vs-far", "--trials", "5"],
    ["evaluate", "--curve", "delay-vs-far", "--trials", "0", "--seed", "1"],
    ["evaluate", "--curve", "delay-vs-far", "--specs", "gllr,xyz", "--seed", "1"],
    ["replay", "--manifest", "/nonexistent/manifest.json"],
    [],
])
def test_usage_errors(tmp_path, argv, capsys):
    out = tmp_path / "d"
    assert main(argv + ["--out", str(out)] if argv else argv) == EXIT_USAGE
    assert "error" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("patch", [
    {"extra": 1},
    {"scenario": {"t0": 1, "horizon": 10, "meters": [{"kind": "ar", "coeffs": [1.5]}]}},
    {"scenario": {"t0": 1, "horizon": 10, "meters": [{"kind": "wave"}]}},
    {"detector": {"b": 0.5, "gain": 2}},
    {"seed": -1},
])
def test_config_schema_violations(tmp_path, patch):
    path = tmp_path / "bad.cfg"
    path.write_text(yaml.safe_dump({**CONFIG, **patch}), encoding="utf-8")
    out = tmp_path / "d"
    assert main(["simulate", "--config", str(path), "--spec", "elts", "--seed", "1", "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_simulate_needs_seed(tmp_path):
    path = tmp_path / "noseed.cfg"
    path.write_text(yaml.safe_dump({k: v for k, v in CONFIG.items() if k != "seed"}), encoding="utf-8")
    assert main(["simulate", "--config", str(path), "--spec", "elts", "--out", str(tmp_path / "d")]) == EXIT_USAGE


def test_invalid_detector_params(tmp_path, cfg):
    out = tmp_path / "d"
    assert main(["simulate", "--config", str(cfg), "--spec", "elts", "--b", "-1", "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_runtime_error_exit_code(tmp_path, cfg):
    out = tmp_path / "t"
    assert main(["tune", "--config", str(cfg), "--target-tau0", "1e9", "--paths", "5", "--length", "50",
                 "--delta", "1", "--out", str(out)]) == EXIT_RUNTIME
    assert not out.exists()


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_replay_is_bit_identical(tmp_path, cfg):
    first = tmp_path / "a"
    assert main(["simulate", "--config", str(cfg), "--spec", "lts", "--seed", "9", "--out", str(first)]) == EXIT_OK
    cfg.write_text(yaml.safe_dump({**CONFIG, "seed": 123}), encoding="utf-8")  # later edits must not matter
    second = tmp_path / "b"
    assert main(["replay", "--manifest", str(first / "manifest.json"), "--out", str(second)]) == EXIT_OK
    a = sorted(p.name for p in first.iterdir())
    assert a == sorted(p.name for p in second.iterdir())
    for name in a:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
