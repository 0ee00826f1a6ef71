import csv
import json

import pytest

from hetnet_bps.cli import (EXIT_CONFIG, EXIT_GUARD, EXIT_NONCONVERGENT, EXIT_OK, ConfigError,
                            ExperimentConfig, main)

SMALL = ["--set", "max_teams=3"]


def run(tmp_path, *argv):
    return main([*argv, "-o", str(tmp_path)])


def test_defaults_match_reference_setup():
    cfg = ExperimentConfig()
    assert (cfg.alpha, cfg.beta, cfg.k, cfg.delta, cfg.gamma_min_db) == (1.0, 1.0, 0.25, 0.6, -10.0)
    assert (cfg.macro_power, cfg.micro_power, len(cfg.carriers)) == (20.0, 1.0, 3)
    assert cfg.game_params().gamma_min == pytest.approx(0.1)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=5, k=0.4)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"schema": "other"},
    {"version": 2},
    {"rings": "two"},
    {"k": -1},
    {"on_cycle": "ignore"},
    {"power_levels": [0.1, 1.0]},
    {"carriers": [[1e9, 1e7], [1e9, 1e7]]},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"rings": -1}')
    assert main(["build", "-c", str(bad), "-o", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["build", "-c", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["build", "--set", "micros_per_macro=5", "-o", str(tmp_path)]) == EXIT_CONFIG


def test_build_default_reports_57_teams(tmp_path, capsys):
    assert run(tmp_path, "build") == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["teams"] == 57
    assert (tmp_path / "scenario.json").exists()
    assert (tmp_path / "scenario.json.bin").exists()


def test_build_rings_zero(tmp_path, capsys):
    assert run(tmp_path, "build", "--set", "rings=0") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["teams"] == 3


def test_build_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "build", *SMALL) == EXIT_OK
    assert run(b, "build", *SMALL) == EXIT_OK
    for name in ("scenario.json", "scenario.json.bin", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_calibrate(tmp_path):
    assert run(tmp_path, "calibrate", *SMALL) == EXIT_OK
    xi = json.loads((tmp_path / "xi.json").read_text())
    assert len(xi["xi"]) == 3 and all(v > 0 for v in xi["xi"])


def test_run_min_power_total(tmp_path):
    assert run(tmp_path, "run", "min") == EXIT_OK
    rep = json.loads((tmp_path / "min.json").read_text())
    assert rep["total_power_watts"] == pytest.approx(410.4)
    assert rep["schema"] == "hetnet-bps/run-report"


def test_run_bps_writes_trace_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "run", "bps", *SMALL) == EXIT_OK
    assert run(b, "run", "bps", *SMALL) == EXIT_OK
    ja = json.loads((a / "bps.json").read_text())
    jb = json.loads((b / "bps.json").read_text())
    ja["meta"].pop("runtime_s"), jb["meta"].pop("runtime_s")
    assert ja == jb
    assert (a / "bps_throughput.csv").read_bytes() == (b / "bps_throughput.csv").read_bytes()
    assert (a / "bps_trace.csv").read_bytes() == (b / "bps_trace.csv").read_bytes()
    assert ja["meta"]["converged"] is True


def test_round_cap_exit_code(tmp_path):
    code = run(tmp_path, "run", "bps", *SMALL, "--set", "max_rounds=1")
    assert code == EXIT_NONCONVERGENT


def test_sweep_single_value(tmp_path):
    assert run(tmp_path, "sweep", "delta", "0.6", *SMALL) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "sweep_delta.csv")))
    assert len(rows) == 1
    assert float(rows[0]["value"]) == 0.6


def test_sweep_rejects_bad_values(tmp_path):
    assert run(tmp_path, "sweep", "k", "0.1,x", *SMALL) == EXIT_CONFIG
    assert run(tmp_path, "sweep", "k", "-0.1", *SMALL) == EXIT_CONFIG


def test_verify_small(tmp_path):
    code = run(tmp_path, "verify", "--set", "toy_instances=2", "--set", "toy_best_reply_instances=5")
    assert code == EXIT_OK
    res = json.loads((tmp_path / "verify.json").read_text())
    assert res["best_reply_matches"] == 5
    assert len(res["instances"]) == 2
    for r in res["instances"]:
        assert r["bps_payoff"] <= r["oracle_payoff"] + 1e-9
        assert "bps_power_watts" in r and "oracle_power_watts" in r


def test_verify_guard_exit_code(tmp_path):
    code = run(tmp_path, "verify", "--set", "toy_levels=40", "--set", "toy_carriers=3")
    assert code == EXIT_GUARD


def test_compare(tmp_path):
    assert run(tmp_path, "compare", *SMALL) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "compare.csv")))
    assert [r["strategy"] for r in rows] == ["bps", "max", "min", "eicic", "lp_abs"]
