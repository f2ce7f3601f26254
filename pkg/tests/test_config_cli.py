import json
import logging
from pathlib import Path

import numpy as np
import pytest
import yaml

from softarm import cli
from softarm.config import ConfigError, load_config, parse_config, reference_config
from softarm.simulator import TrajectoryLog

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def _segment(**over):
    seg = {"length": 0.2, "chamber_offset": 0.015, "chamber_area": 3e-4, "mass": 0.05,
           "stiffness": 0.124, "damping": 0.011}
    seg.update(over)
    return seg


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    load_config(path)


def test_unknown_key_is_rejected_with_its_path():
    with pytest.raises(ConfigError) as err:
        parse_config({"arm": {"segments": [_segment(colour="red")]}})
    assert err.value.field == "arm.segments.0.colour"


def test_missing_field_is_reported():
    with pytest.raises(ConfigError) as err:
        parse_config({"arm": {"segments": [{"length": 0.2}]}})
    assert err.value.field.startswith("arm.segments.0.")


def test_reference_config_round_trips_through_yaml(tmp_path):
    cfg = reference_config()
    path = _write(tmp_path, cfg.model_dump(mode="json"))
    assert load_config(path) == cfg


def test_cli_unknown_key_exits_2(tmp_path, capsys):
    path = _write(tmp_path, {"arm": {"segments": [_segment()]}, "sim": {"durration": 1.0}})
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2
    err = _error(capsys)
    assert err["exit_code"] == 2 and err["field"] == "sim.durration"


def test_cli_bad_yaml_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("arm: [unclosed\n")
    assert cli.main(["simulate", "--config", str(path)]) == 2
    assert "invalid YAML" in _error(capsys)["message"]


def test_cli_negative_payload_exits_2(capsys):
    assert cli.main(["track", "--payload", "-1"]) == 2
    assert _error(capsys)["field"] == "payload"


def test_cli_singular_start_exits_3(tmp_path, capsys):
    path = _write(tmp_path, {"arm": {"segments": [_segment()]}, "sim": {"duration": 0.1},
                             "initial": {"q": [0.0, 0.0]}})
    assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 3
    err = _error(capsys)
    assert err["error"] == "SingularConfigurationError" and err["time"] == 0.0


def test_simulate_one_segment_row_count(tmp_path):
    assert cli.main(["simulate", "--config", str(CONFIGS / "one_segment.yaml"),
                     "--out", str(tmp_path)]) == 0
    log = TrajectoryLog.from_csv(tmp_path / "trajectory.csv")
    assert len(log) == 200 and log.group("q").shape == (200, 2)


@pytest.fixture(scope="module")
def short_excitation(tmp_path_factory):
    out = tmp_path_factory.mktemp("excite")
    data = yaml.safe_load((CONFIGS / "identification.yaml").read_text())
    data["sim"]["duration"] = 16.0
    path = out / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    assert cli.main(["simulate", "--config", str(path), "--out", str(out)]) == 0
    return path, out


def test_simulate_then_identify_recovers_truth(short_excitation):
    path, out = short_excitation
    assert cli.main(["identify", "--config", str(path), "--out", str(out),
                     "--log", str(out / "excitation.csv")]) == 0
    report = json.loads((out / "identification.json").read_text())
    truth = {"k_s_1": 0.124, "k_s_2": 0.083, "k_d_1": 0.011, "k_d_2": 0.009}
    for name, value in truth.items():
        assert report["coefficients"][name] == pytest.approx(value, rel=0.02)


def test_identify_all_known_reports_residual_only(short_excitation, tmp_path):
    path, out = short_excitation
    data = yaml.safe_load(path.read_text())
    data["identify"]["known"] = {"m_1": 0.05, "m_2": 0.04, "k_s_1": 0.124, "k_s_2": 0.083,
                                 "k_d_1": 0.011, "k_d_2": 0.009, "m_tip": 0.0}
    cfg = _write(tmp_path, data)
    assert cli.main(["identify", "--config", str(cfg), "--out", str(tmp_path),
                     "--log", str(out / "excitation.csv")]) == 0
    report = json.loads((tmp_path / "identification.json").read_text())
    assert report["coefficients"] == {} and report["residual"] > 0


def test_identify_truncated_log_exits_2(short_excitation, tmp_path, capsys):
    path, out = short_excitation
    lines = (out / "excitation.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:10] + [lines[10][:20]]) + "\n")
    assert cli.main(["identify", "--config", str(path), "--out", str(tmp_path),
                     "--log", str(bad)]) == 2
    assert "line 11" in _error(capsys)["message"]


def test_identify_missing_log_exits_2(tmp_path, capsys):
    assert cli.main(["identify", "--log", str(tmp_path / "nope.csv")]) == 2
    assert "cannot read log" in _error(capsys)["message"]


def test_bench_report_shape_and_determinism():
    a = cli.bench_dynamics(2, 50, seed=3, warmup=5)
    b = cli.bench_dynamics(2, 50, seed=3, warmup=5)
    assert {"p50_us", "p95_us", "p99_us", "states_sha256"} <= set(a)
    assert a["p50_us"] <= a["p95_us"] <= a["p99_us"]
    assert a["states_sha256"] == b["states_sha256"]
    assert cli.bench_dynamics(2, 50, seed=4, warmup=5)["states_sha256"] != a["states_sha256"]


def test_bench_cost_grows_with_segments():
    p2 = cli.bench_dynamics(2, 300, seed=0)["p50_us"]
    p4 = cli.bench_dynamics(4, 300, seed=0)["p50_us"]
    assert p4 > p2


def test_bench_command_writes_report(tmp_path):
    path = _write(tmp_path, {"arm": {"segments": [_segment(), _segment(mass=0.04)]},
                             "bench": {"segments": [1, 2], "samples": 40, "warmup": 5}})
    assert cli.main(["bench", "--config", str(path), "--out", str(tmp_path)]) == 0
    runs = json.loads((tmp_path / "bench.json").read_text())["runs"]
    assert [r["n"] for r in runs] == [1, 2]


def test_log_level_env_var(monkeypatch, tmp_path, caplog):
    monkeypatch.setenv("SOFTARM_LOG_LEVEL", "info")
    with caplog.at_level(logging.INFO, logger="softarm"):
        assert cli.main(["simulate", "--config", str(CONFIGS / "one_segment.yaml"),
                         "--out", str(tmp_path)]) == 0
    assert any("wrote 200 rows" in r.getMessage() for r in caplog.records)


def test_track_invdyn_degrades_with_payload_more_than_adaptive(tmp_path):
    data = yaml.safe_load((CONFIGS / "circle.yaml").read_text())
    data["sim"]["duration"] = 6.0
    data["metrics"]["window_start"] = 3.0
    path = _write(tmp_path, data)
    rms = {}
    for kind in ("adaptive", "invdyn"):
        out = tmp_path / kind
        assert cli.main(["track", "--config", str(path), "--out", str(out), "--controller", kind,
                         "--payload", "0.025", "--seed", "1"]) == 0
        rms[kind] = json.loads((out / "metrics.json").read_text())["rms_error"]
    assert rms["invdyn"] > rms["adaptive"]
    assert np.isfinite(list(rms.values())).all()
