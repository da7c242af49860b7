"""Command-line surface: exit codes, outputs and JSON summaries"""

import json

import pytest

from kwk.cli_core import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, cli_main


@pytest.fixture
def write_config(tmp_path, config_dict):
    def write(name="run.json", **overrides):
        path = tmp_path / name
        path.write_text(json.dumps(config_dict(output_dir=str(tmp_path / "out"), **overrides)))
        return str(path)
    return write


def test_convert_alpha(capsys):
    assert cli_main(["convert", "alpha", "--db", "0.5", "--y", "1.5"]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(3.65494e-10, rel=1e-5)


def test_convert_alpha_json(capsys):
    assert cli_main(["convert", "alpha", "--db", "0.5", "--y", "1.5", "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["alpha0"] == pytest.approx(3.65494e-10, rel=1e-5)


def test_convert_alpha_bad_exponent():
    assert cli_main(["convert", "alpha", "--db", "0.5", "--y", "3.5"]) == EXIT_INVALID


def test_usage_errors_are_validation_errors(capsys):
    assert cli_main([]) == EXIT_INVALID
    assert cli_main(["simulate"]) == EXIT_INVALID
    assert cli_main(["experiment", "ring"]) == EXIT_INVALID
    assert cli_main(["--help"]) == EXIT_OK


def test_missing_and_malformed_configs(tmp_path, capsys):
    assert cli_main(["simulate", str(tmp_path / "missing.json")]) == EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": ')
    assert cli_main(["simulate", str(bad)]) == EXIT_INVALID
    assert "line 1" in capsys.readouterr().err


def test_simulate_writes_artifacts(write_config, tmp_path, capsys):
    assert cli_main(["simulate", write_config(), "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    out = tmp_path / "out"
    for name in ("traces.csv", "energy.csv", "sigma.bin", "sigma.json", "p.bin", "u.bin", "u.json",
                 "metadata.json"):
        assert (out / name).exists(), name
    assert summary["steps"] == 10
    assert summary["retries"] == 0
    assert summary["output_dir"] == str(out)


def test_output_override(write_config, tmp_path):
    target = tmp_path / "elsewhere"
    assert cli_main(["simulate", write_config(), "-o", str(target)]) == EXIT_OK
    assert (target / "traces.csv").exists()


def test_numerical_failure_exit_code(write_config):
    path = write_config(initial={"sigma0": {"kind": "gaussian", "amplitude": -5.0, "width": 0.5}})
    assert cli_main(["simulate", path]) == EXIT_NUMERICAL


def test_json_error_summaries(write_config, tmp_path, capsys):
    assert cli_main(["simulate", str(tmp_path / "missing.json"), "--json"]) == EXIT_INVALID
    summary = json.loads(capsys.readouterr().out)
    assert summary["ok"] is False
    assert summary["exit_code"] == EXIT_INVALID and summary["error"] == "validation"
    assert "missing.json" in summary["message"]

    path = write_config(initial={"sigma0": {"kind": "gaussian", "amplitude": -5.0, "width": 0.5}})
    assert cli_main(["simulate", path, "--json"]) == EXIT_NUMERICAL
    summary = json.loads(capsys.readouterr().out)
    assert summary["ok"] is False and summary["error"] == "numerical"


def test_sweep_viscosity(write_config, tmp_path, capsys):
    path = write_config(grid={"dims": [8, 8], "spacing": [0.25, 0.25]}, probes={"cells": [[2, 2]]},
                        absorption={"kind": "none", "y": 2.5}, sweep={"mus": [1e-2, 1e-3]},
                        solver={"dt": 0.05, "t_end": 0.25})
    assert cli_main(["sweep", "viscosity", path, "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["mus"] == [1e-2, 1e-3, 0.0]
    assert (tmp_path / "out" / "sweep_report.csv").exists()


def test_experiment_ring(write_config, tmp_path, capsys):
    path = write_config(grid={"dims": [24, 24], "spacing": [0.5, 0.5]}, media={"BoverA": 7.0},
                        solver={"dt": 0.1, "t_end": 4.0},
                        experiment={"radius": 4.0, "frequency": 0.25, "amplitude": 0.01})
    assert cli_main(["experiment", "ring", path, "--json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["runs"] == 10
    assert summary["rows"] == 64
    assert summary["linear"]["cliff_index"] == 29
    assert summary["linear"]["cliff_ratio"] <= 1e-6
    out = tmp_path / "out"
    for name in ("traces_linear.csv", "traces_nonlinear.csv", "singular_values_linear.csv",
                 "singular_values_nonlinear.csv", "metadata.json"):
        assert (out / name).exists(), name
