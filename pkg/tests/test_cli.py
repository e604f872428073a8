"""Command-line interface: flags, config files, exit codes."""

import json

import numpy as np
import pytest

from otpush import cli
from otpush.experiments import (BoundViolationError, ExperimentReport,
                                SweepConfig)


def test_example_12_exits_zero(capsys):
    assert cli.main(["example", "--id", "1.2"]) == 0
    out = capsys.readouterr().out
    assert "example-1.2: " in out and "passed=True" in out


def test_unknown_example_id_exits_one(capsys):
    assert cli.main(["example", "--id", "7.7"]) == 1
    assert "unknown example id" in capsys.readouterr().err


def test_bad_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["transmogrify"])
    assert exc.value.code == 1


def test_rate_fit_narrow_grid_exits_one(capsys):
    code = cli.main(["rate-fit", "--eps-min", "0.01", "--eps-max", "0.02",
                     "--eps-count", "6"])
    assert code == 1
    assert "otpush: error" in capsys.readouterr().err


def test_rate_fit_invalid_exponent_pair_exits_one(capsys):
    assert cli.main(["rate-fit", "--p", "3", "--q", "2"]) == 1


def test_partial_eps_flags_exit_one(capsys):
    assert cli.main(["rate-fit", "--eps-min", "0.01"]) == 1


def test_rate_fit_runs_and_writes_report(tmp_path, capsys):
    out = tmp_path / "rate"
    code = cli.main(["rate-fit", "--out", str(out)])
    assert code == 0
    captured = capsys.readouterr().out
    assert "slope=" in captured
    text = (out / "rate.csv").read_text()
    assert text.startswith("# scenario=rate\n")
    assert "# slope=" in text


def test_config_file_run(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"id": "1.3", "eps": [0.1, 0.01]}))
    out = tmp_path / "res"
    code = cli.main(["example", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    assert (out / "example-1.3.csv").exists()


def test_config_flag_precedence(tmp_path, capsys):
    # a flag overrides the same key from the config file: with --seed 9 the
    # run must reproduce a plain --seed 9 run byte for byte
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"seed": 1}))
    assert cli.main(["demo", "--config", str(cfg_path), "--seed", "9",
                     "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["demo", "--seed", "9", "--out", str(tmp_path / "b")]) == 0
    assert cli.main(["demo", "--seed", "1", "--out", str(tmp_path / "c")]) == 0
    a = (tmp_path / "a" / "demo.csv").read_bytes()
    b = (tmp_path / "b" / "demo.csv").read_bytes()
    c = (tmp_path / "c" / "demo.csv").read_bytes()
    assert a == b
    assert a != c


def test_unknown_config_key_exits_one(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"epz": [0.1]}))
    assert cli.main(["demo", "--config", str(cfg_path)]) == 1
    assert "otpush: error" in capsys.readouterr().err


def test_missing_config_file_exits_one(tmp_path, capsys):
    assert cli.main(["demo", "--config", str(tmp_path / "nope.json")]) == 1


def test_failing_report_exits_two(monkeypatch, capsys):
    def fake_demo(cfg):
        return ExperimentReport(scenario="demo", columns=("a",),
                                rows=np.array([[1.0]]), passed=False,
                                failures=("synthetic failure",))
    monkeypatch.setattr(cli, "run_demo", fake_demo)
    assert cli.main(["demo"]) == 2
    assert "synthetic failure" in capsys.readouterr().err


def test_bound_violation_exits_two(monkeypatch, capsys):
    def fake_audit(cfg):
        raise BoundViolationError("estimate exceeded the bound",
                                  {"seed": 3, "w_out": 2.0})
    monkeypatch.setattr(cli, "audit_stability_bound", fake_audit)
    assert cli.main(["stability-audit"]) == 2
    assert "bound violation" in capsys.readouterr().err


def test_figure1_requires_zero_or_two_targets(tmp_path, capsys):
    assert cli.main(["figure1", "--target", "only-one.json",
                     "--out", str(tmp_path)]) == 1


def test_figure1_small_run(tmp_path):
    out = tmp_path / "fig"
    code = cli.main(["figure1", "--grid", "16", "--out", str(out)])
    assert code == 0
    assert (out / "manifest.json").exists()
    assert (out / "figure1.csv").exists()


def test_main_entry_point_is_wired():
    import importlib.metadata as md
    eps = md.entry_points(group="console_scripts")
    ours = [e for e in eps if e.name == "otpush"]
    assert ours and ours[0].value == "otpush.cli:main"
