"""Tests for the spikesolve command line, driven through typer's CliRunner."""

from __future__ import annotations

from pathlib import Path

import pytest
import typer
from typer.testing import CliRunner

from spikesolve import protocol
from spikesolve.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VIOLATION, _exit_on_error, app
from spikesolve.errors import ConfigError, ConvergenceError
from spikesolve.settings import AtomSpec, ExperimentConfig, FamilySpec, save_experiment_config

runner = CliRunner()


@pytest.fixture()
def simulated(tmp_path: Path) -> Path:
    result = runner.invoke(
        app, ["simulate", "single-spike-fourier", "--order", "128", "--out", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    return tmp_path


def test_exit_codes() -> None:
    @_exit_on_error
    def numerical() -> None:
        raise ConvergenceError("stalled", last_gap=1.0, iterations=3)

    @_exit_on_error
    def config() -> None:
        raise ConfigError("bad")

    with pytest.raises(typer.Exit) as numerical_exit:
        numerical()
    assert numerical_exit.value.exit_code == EXIT_NUMERICAL
    with pytest.raises(typer.Exit) as config_exit:
        config()
    assert config_exit.value.exit_code == EXIT_CONFIG


def test_simulate_writes_truth_and_samples(simulated: Path) -> None:
    truth = protocol.decode_measure((simulated / "measure.json").read_bytes())
    assert truth.locations.tolist() == [0.37]
    y, sigma = protocol.decode_samples((simulated / "samples.json").read_bytes())
    assert y.family.order == 128
    assert sigma == 0.0


def test_simulate_needs_a_scenario(tmp_path: Path) -> None:
    result = runner.invoke(app, ["simulate", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG


def test_solve(simulated: Path) -> None:
    out = simulated / "solved"
    samples = str(simulated / "samples.json")
    result = runner.invoke(
        app, ["solve", "--samples", samples, "--lambda", "1e-3*|y|", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "optimality passed" in result.output
    doc = protocol.decode_result((out / "result.json").read_bytes())
    (atom,) = doc.measure.atoms
    assert atom.t == pytest.approx(0.37, abs=1e-5)
    assert doc.optimality.passed
    dual = (out / "dualpoly.csv").read_text().splitlines()
    assert dual[0] == "t,real,imag,modulus,phase"
    assert len(dual) == 1 + 16 * 257


def test_solve_grid_option(simulated: Path) -> None:
    samples = str(simulated / "samples.json")
    out = simulated / "fine"
    args = ["solve", "--samples", samples, "--lambda", "1e-3*|y|", "--grid", "3084"]
    fine = runner.invoke(app, [*args, "--out", str(out)])
    assert fine.exit_code == 0, fine.output
    (atom,) = protocol.decode_result((out / "result.json").read_bytes()).measure.atoms
    assert atom.t == pytest.approx(0.37, abs=1e-5)
    coarse = runner.invoke(
        app, ["solve", "--samples", samples, "--lambda", "1e-3*|y|", "--grid", "100"]
    )
    assert coarse.exit_code == EXIT_CONFIG


def test_solve_errors(simulated: Path) -> None:
    # auto needs a positive sigma
    auto = runner.invoke(app, ["solve", "--samples", str(simulated / "samples.json")])
    assert auto.exit_code == EXIT_CONFIG
    missing = runner.invoke(app, ["solve", "--samples", str(simulated / "nope.json")])
    assert missing.exit_code == EXIT_CONFIG


def test_certify(simulated: Path) -> None:
    out = simulated / "cert"
    result = runner.invoke(app, ["certify", str(simulated / "measure.json"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert protocol.decode_certificate((out / "certificate.json").read_bytes()).passed
    dual = (out / "dualpoly.csv").read_text().splitlines()
    assert dual[0] == "t,real,imag,modulus,phase"
    assert len(dual) == 1 + 16 * 257


def test_certify_failures(simulated: Path) -> None:
    measure = str(simulated / "measure.json")
    below = runner.invoke(app, ["certify", measure, "--fc", "64", "--out", str(simulated / "c")])
    assert below.exit_code == EXIT_CONFIG
    strict_dir = simulated / "strict"
    strict = runner.invoke(app, ["certify", measure, "--c-a", "10", "--out", str(strict_dir)])
    assert strict.exit_code == EXIT_VIOLATION
    assert not protocol.decode_certificate((strict_dir / "certificate.json").read_bytes()).passed
    assert (strict_dir / "dualpoly.csv").is_file()


def test_run_and_report(tmp_path: Path) -> None:
    cfg = ExperimentConfig(
        scenario="cli-small",
        family=FamilySpec(kind="fourier", order=16),
        truth=[AtomSpec(t=0.2, amplitude=3.0, phase=1.0), AtomSpec(t=0.6, amplitude=2.0)],
        noise_sigma=0.1,
        trials=1,
    )
    config = save_experiment_config(cfg, tmp_path / "exp.yml")
    run_dir = tmp_path / "run"
    result = runner.invoke(app, ["run", "--config", str(config), "--out", str(run_dir)])
    assert result.exit_code == 0, result.output
    assert "Scenario: cli-small" in result.output
    assert "Trials: 1 (0 failed)" in result.output
    assert (run_dir / "results.json").is_file()

    plot = tmp_path / "plots" / "dual.csv"
    report = runner.invoke(
        app, ["report", str(run_dir), "--which", "dualpoly", "--out", str(plot)]
    )
    assert report.exit_code == 0, report.output
    assert "Trials: 1" in report.output
    assert plot.read_text().startswith("t,real,imag,modulus,phase\n")


def test_run_errors(tmp_path: Path) -> None:
    unknown = runner.invoke(app, ["run", "no-such-scenario"])
    assert unknown.exit_code == EXIT_CONFIG
    both = runner.invoke(
        app, ["run", "single-spike-fourier", "--config", str(tmp_path / "x.yml")]
    )
    assert both.exit_code == EXIT_CONFIG
    report = runner.invoke(app, ["report", str(tmp_path)])
    assert report.exit_code == EXIT_CONFIG


def test_calibrate_writes_csv(tmp_path: Path) -> None:
    out = tmp_path / "calibration.csv"
    result = runner.invoke(
        app,
        [
            "calibrate",
            "--order",
            "16",
            "--u",
            "4",
            "--u",
            "8",
            "--trials",
            "100",
            "--grid",
            "1024",
            "--out",
            str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0].startswith("u,analytic_bound")
    assert len(lines) == 3
