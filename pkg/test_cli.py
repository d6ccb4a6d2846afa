"""
Command-line surface: subcommand outputs, exit codes and the JSON error line.
"""
import csv
import json

import pytest

from snls_lab.main import main
from snls_lab.numerics.experiments import MANIFEST, load_run


def _error_line(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_invalid_time_step_is_a_validation_failure(capsys):
    assert main(["simulate", "--dt", "-1"]) == 2
    error = _error_line(capsys)
    assert error["error"] == "validation-failure"
    assert error["parameter"] == "dt"


def test_unknown_flag(capsys):
    assert main(["simulate", "--bogus"]) == 2
    assert _error_line(capsys)["error"] == "unknown-flag"


def test_bad_phi_literal(capsys):
    assert main(["simulate", "--phi", "1+2j+"]) == 2
    assert _error_line(capsys)["error"] == "validation-failure"


def test_t_end_must_be_a_multiple_of_dt(capsys):
    assert main(["simulate", "--dt", "0.3", "--t-end", "1.0"]) == 2


def test_alpha_must_be_critical_for_the_dimension(capsys):
    assert main(["simulate", "--alpha", "3", "--d", "1"]) == 2
    error = _error_line(capsys)
    assert error["error"] == "validation-failure"
    assert error["parameter"] == "alpha"


def test_simulate_writes_event_log(tmp_path):
    out = tmp_path / "sim"
    argv = ["simulate", "--n", "64", "--L", "20", "--dt", "1e-2", "--t-end", "0.2", "--phi", "1, 0.5i", "--out", str(out)]
    assert main(argv + ["--snapshots"]) == 0
    events = [json.loads(line) for line in (out / "events.jsonl").read_text().splitlines()]
    assert events[0]["event"] == "config" and events[0]["seed"] == 0
    assert events[-1]["event"] == "outcome"
    snapshots = [e for e in events if e["event"] == "snapshot"]
    assert snapshots[0]["time"] == 0.0 and len(snapshots) >= 3
    assert snapshots[0]["residual"] is None
    assert any(out.glob("snapshot_*.snls"))


def test_gbm_closed_form_table(tmp_path):
    out = tmp_path / "gbm.csv"
    assert main(["gbm", "--c-norm", "1,2", "--epsilon", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["c_norm"] for r in rows] == ["1.0", "2.0"]
    assert rows[0]["method"] == "closed-form"
    assert float(rows[0]["p_hat"]) == pytest.approx(0.3173, abs=1e-4)
    assert float(rows[1]["p_hat"]) < float(rows[0]["p_hat"])


def test_gbm_rejects_zero_strength(capsys):
    assert main(["gbm", "--c-norm", "0", "--epsilon", "1"]) == 2
    assert _error_line(capsys)["parameter"] == "c_norm"


def test_picard_report(tmp_path):
    out = tmp_path / "picard.json"
    argv = ["picard", "--amplitude", "0.05", "--n-t", "21", "--n-pairs", "2", "--strichartz-samples", "2", "--out", str(out)]
    assert main(argv) == 0
    report = json.loads(out.read_text())
    assert report["regime"] == "mass-small-time"
    assert report["interval"] == [0.0, 1.0]
    assert report["budget"]["C_source"] == "strichartz-estimator"
    assert report["contraction"]["converged"]
    assert report["h_sup"] >= 1.0


def test_picard_large_time_needs_t_end_past_split(capsys):
    assert main(["picard", "--regime", "mass-large-time", "--c-norm", "0.25", "--t-end", "2"]) == 2


def test_sweep_command(tmp_path, capsys):
    config = {
        "grid": {"d": 1, "n": 64, "L": 40.0},
        "alpha": 5.0,
        "lambda_sign": 1,
        "dt": 1e-2,
        "t_end": 1.0,
        "record_stride": 10,
        "c_norm_list": [0.0, 1.0],
        "n_paths": 2,
        "base_seed": 3,
        "profile": "gaussian",
        "profile_params": {"amplitude": 0.1},
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "run"
    assert main(["sweep", "--config", str(path), "--out", str(out), "--workers", "1"]) == 0
    assert "P(global)" in capsys.readouterr().out
    assert (out / MANIFEST).is_file()
    report = load_run(out)
    assert [s.strength for s in report.summaries] == [0.0, 1.0]
    assert len(report.trajectories) == 4


def test_sweep_command_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"grid": {"d": 1, "n": 64, "L": 40.0}, "alpha": 5.0, "n_paths": 2}))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "run")]) == 2
    assert _error_line(capsys)["parameter"] == "c_norm_list"


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "checks passed" in capsys.readouterr().out
