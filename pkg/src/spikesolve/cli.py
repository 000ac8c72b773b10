"""CLI entry point for spikesolve."""

from __future__ import annotations

import dataclasses
import functools
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import TYPE_CHECKING, TypeVar

import msgspec as _msgspec
import typer as _typer

from .errors import ConfigError, NumericalError, SpikeSolveError
from .settings import ExperimentConfig, FamilySpec, load_experiment_config

if TYPE_CHECKING:
    from .protocol import RunRecord

app = _typer.Typer(
    name="spikesolve",
    help="spikesolve: recover spikes from noisy generalized moments with the BLASSO.",
    no_args_is_help=True,
)

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VIOLATION = 3

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@app.callback()
def _configure_logging(
    verbose: bool = _typer.Option(False, "-v", "--verbose", help="Log at DEBUG level"),
) -> None:
    """Send library logs to stderr; INFO by default."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=_LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


_F = TypeVar("_F", bound=Callable[..., object])


def _exit_on_error(func: _F) -> _F:
    """Map library errors to exit codes with a one-line message on stderr."""

    @functools.wraps(func)
    def wrapper(*args: object, **kwargs: object) -> object:
        try:
            return func(*args, **kwargs)
        except NumericalError as e:
            _typer.echo(f"Error: {e}", err=True)
            raise _typer.Exit(code=EXIT_NUMERICAL)
        except SpikeSolveError as e:
            _typer.echo(f"Error: {e}", err=True)
            raise _typer.Exit(code=EXIT_CONFIG)

    return wrapper  # type: ignore[return-value]


def _experiment(config: Path | None, scenario: str | None, order: int | None) -> ExperimentConfig:
    from .harness import builtin_scenario

    if config is not None and scenario is not None:
        raise ConfigError("give either a scenario name or --config, not both")
    if config is not None:
        return load_experiment_config(config)
    if scenario is None:
        raise ConfigError("give a scenario name or --config")
    return builtin_scenario(scenario, order)


def _override(
    cfg: ExperimentConfig, *, seed: int | None, trials: int | None, lam: str | None
) -> ExperimentConfig:
    changes: dict[str, object] = {}
    if seed is not None:
        changes["seed"] = seed
    if trials is not None:
        changes["trials"] = trials
    if lam is not None:
        changes["lambda_rule"] = lam
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _write_json(data: bytes, out: Path | None) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    _typer.echo(f"Wrote {out}", err=True)


def print_run_summary(record: RunRecord) -> None:
    agg = record.aggregate
    _typer.echo(f"Scenario: {record.config.get('scenario', 'custom')}")
    _typer.echo(f"Trials: {agg.trials} ({agg.failed} failed)")
    _typer.echo(f"Optimality passed: {agg.optimality_passed}/{agg.trials - agg.failed}")
    rows = [
        ("Localization", agg.localization_conditioned, agg.localization_violating_trials),
        ("Detection", agg.detection_conditioned, agg.detection_violating_trials),
    ]
    for name, cond, bad in rows:
        shown = "n/a" if not cond else f"{100.0 * (cond - bad) / cond:.1f}%"
        _typer.echo(f"{name}: {cond} conditioned, {bad} violating, pass rate {shown}")
    if agg.bregman_violating_trials:
        _typer.echo(f"Bregman bound violated on {agg.bregman_violating_trials} trials")
    if agg.prediction_violating_trials:
        _typer.echo(f"Prediction bound violated on {agg.prediction_violating_trials} trials")
    if record.corollary is not None:
        c = record.corollary
        _typer.echo(
            f"Corollary ({c.case}): lambda threshold {c.lambda_threshold:.6g}, "
            f"failure probability {c.failure_probability:.4g}, "
            f"detection {c.detection_threshold:.6g}"
        )
    elif record.corollary_note:
        _typer.echo(f"Corollary: not applicable ({record.corollary_note})")
    if record.calibration:
        _typer.echo(f"Calibration: {len(record.calibration)} levels")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@app.command()
@_exit_on_error
def simulate(
    scenario: str | None = _typer.Argument(None, help="Built-in scenario name"),
    config: Path | None = _typer.Option(None, "--config", help="Experiment YAML file"),
    order: int | None = _typer.Option(None, "--order", "--fc", help="f_c or m of the scenario"),
    seed: int | None = _typer.Option(None, "--seed", help="Noise seed"),
    trial: int = _typer.Option(0, "--trial", help="Trial index of the noise substream"),
    out: Path = _typer.Option(Path("."), "--out", help="Output directory"),
) -> None:
    """Write the truth (measure.json) and one noisy sample vector (samples.json)."""
    from . import protocol as _proto
    from .families import forward
    from .harness import family_of, truth_of
    from .noise import NoiseModel, sample_noise

    cfg = _override(_experiment(config, scenario, order), seed=seed, trials=None, lam=None)
    fam = family_of(cfg)
    truth = truth_of(cfg, fam)
    noise = sample_noise(NoiseModel.for_family(fam, cfg.noise_sigma, cfg.seed), fam, trial)
    y = forward(truth, fam) + noise
    out.mkdir(parents=True, exist_ok=True)
    (out / "measure.json").write_bytes(_proto.encode_measure(truth))
    (out / "samples.json").write_bytes(_proto.encode_samples(y, cfg.noise_sigma))
    _typer.echo(f"Wrote {out / 'measure.json'} and {out / 'samples.json'}", err=True)


@app.command()
@_exit_on_error
def solve(
    samples: Path = _typer.Option(..., "--samples", help="samples.json"),
    lam: str = _typer.Option("auto", "--lambda", help="auto, 2x, 1e-3*|y| or a number"),
    grid: int | None = _typer.Option(None, "--grid", help="Dual grid size in points"),
    debias: bool = _typer.Option(False, "--debias", help="Also refit amplitudes unpenalized"),
    out: Path | None = _typer.Option(
        None, "--out", help="Directory for result.json and dualpoly.csv"
    ),
) -> None:
    """Solve the BLASSO for a sample vector.

    Without --out the result document goes to stdout.
    """
    from . import protocol as _proto
    from .harness import resolve_lambda, write_dualpoly_csv
    from .settings import SolverSettings
    from .solver import SolverConfig
    from .solver import solve as _solve

    if not samples.is_file():
        raise ConfigError(f"samples file not found: {samples}")
    y, sigma = _proto.decode_samples(samples.read_bytes())
    fam = y.family
    cfg = ExperimentConfig(
        family=FamilySpec(kind=str(fam.kind), order=fam.order),  # type: ignore[arg-type]
        noise_sigma=sigma or 0.0,
        lambda_rule=lam,
        solver=SolverSettings(debias=debias),
    )
    value = resolve_lambda(cfg, fam, y)
    solver_cfg = SolverConfig.for_family(fam, value, cfg.solver)
    if grid is not None:
        solver_cfg = dataclasses.replace(solver_cfg, dual_grid=grid)
    result = _solve(fam, y, solver_cfg)
    if out is None:
        _write_json(_proto.encode_result(result), None)
        return
    _write_json(_proto.encode_result(result), out / "result.json")
    write_dualpoly_csv(result.dual_coefficients, out / "dualpoly.csv")
    status = "passed" if result.optimality.passed else "FAILED"
    _typer.echo(
        f"{len(result.measure)} atoms, objective {result.objective:.12g}, "
        f"lambda {value:.6g}, optimality {status}"
    )


@app.command()
@_exit_on_error
def certify(
    measure: Path = _typer.Argument(..., help="measure.json on the circle"),
    fc: int = _typer.Option(128, "--fc", help="Cut-off frequency"),
    c_a: float = _typer.Option(0.0838, "--c-a", help="QIC constant C_a"),
    c_b: float = _typer.Option(0.0092, "--c-b", help="QIC constant C_b"),
    any_fc: bool = _typer.Option(False, "--any-fc", help="Allow f_c below 128"),
    out: Path | None = _typer.Option(
        None, "--out", help="Directory for certificate.json and dualpoly.csv"
    ),
) -> None:
    """Build the Fourier dual certificate of a measure and verify QIC on it.

    Exits with code 3 when the verification fails.
    """
    from . import protocol as _proto
    from .certificates import QicConstants, certificate_for, verify_qic
    from .harness import write_dualpoly_csv

    if not measure.is_file():
        raise ConfigError(f"measure file not found: {measure}")
    truth = _proto.decode_measure(measure.read_bytes())
    P = certificate_for(truth, fc, enforce_regime=not any_fc)
    report = verify_qic(P, truth.locations, truth.phases, QicConstants(c_a=c_a, c_b=c_b))
    if out is None:
        _write_json(_proto.encode_certificate(report), None)
    else:
        _write_json(_proto.encode_certificate(report), out / "certificate.json")
        write_dualpoly_csv(P, out / "dualpoly.csv")
    if not report.passed:
        _typer.echo(f"Error: QIC({c_a}, {c_b}) verification failed", err=True)
        raise _typer.Exit(code=EXIT_VIOLATION)


@app.command()
@_exit_on_error
def calibrate(
    family: str = _typer.Option("fourier", "--family", help="fourier or chebyshev"),
    order: int = _typer.Option(16, "--order", help="f_c or m"),
    sigma: float = _typer.Option(1.0, "--sigma", help="Noise level"),
    u: list[float] = _typer.Option([], "--u", help="Levels in units of sigma (repeatable)"),
    trials: int = _typer.Option(2000, "--trials", help="Monte Carlo trials"),
    grid: int = _typer.Option(8192, "--grid", help="Monte Carlo grid size"),
    seed: int = _typer.Option(0, "--seed", help="Noise seed"),
    out: Path | None = _typer.Option(None, "--out", help="Write calibration.csv here"),
    json_output: bool = _typer.Option(False, "--json", help="Print rows as JSON"),
) -> None:
    """Compare the closed-form noise tail bound with a Monte Carlo estimate."""
    from rich.console import Console as _Console
    from rich.live import Live as _Live
    from rich.spinner import Spinner as _Spinner

    from .harness import run_calibration, write_calibration_csv
    from .settings import CalibrationSpec

    cfg = ExperimentConfig(
        scenario="calibrate",
        family=FamilySpec(kind=family, order=order),  # type: ignore[arg-type]
        noise_sigma=sigma,
        seed=seed,
        calibration=CalibrationSpec(u_values=list(u), mc_trials=trials, grid_size=grid),
    )
    err_console = _Console(stderr=True)
    with _Live(_Spinner("dots", "Calibrating..."), console=err_console, transient=True):
        rows = run_calibration(cfg)

    if json_output:
        sys.stdout.buffer.write(_msgspec.json.encode(rows) + b"\n")
    else:
        for row in rows:
            flag = "" if row.regime_valid else "  (outside regime)"
            _typer.echo(
                f"u={row.u:.6g}  bound={row.analytic_bound:.4g}  "
                f"mc={row.mc_exceedance:.4g} [{row.mc_low:.4g}, {row.mc_high:.4g}]{flag}"
            )
    if out is not None:
        write_calibration_csv(rows, out)
        _typer.echo(f"Wrote {out}", err=True)


@app.command()
@_exit_on_error
def run(
    scenario: str | None = _typer.Argument(None, help="Built-in scenario name"),
    config: Path | None = _typer.Option(None, "--config", help="Experiment YAML file"),
    order: int | None = _typer.Option(None, "--order", "--fc", help="f_c or m of the scenario"),
    out: Path | None = _typer.Option(None, "--out", help="Run directory"),
    seed: int | None = _typer.Option(None, "--seed", help="Override the seed"),
    trials: int | None = _typer.Option(None, "--trials", help="Override the trial count"),
    lam: str | None = _typer.Option(None, "--lambda", help="Override the lambda rule"),
) -> None:
    """Run a scenario end to end and write its run directory.

    Exits with code 3 when a guarantee fails on a trial that met its noise event.
    """
    from rich.console import Console as _Console
    from rich.live import Live as _Live
    from rich.spinner import Spinner as _Spinner

    from .harness import has_violations, run_scenario

    cfg = _override(_experiment(config, scenario, order), seed=seed, trials=trials, lam=lam)
    err_console = _Console(stderr=True)
    label = f"Running {cfg.scenario} ({cfg.trials} trials)..."
    with _Live(_Spinner("dots", label), console=err_console, transient=True):
        record = run_scenario(cfg, out)
    print_run_summary(record)
    if out is not None:
        _typer.echo(f"Run directory: {out}")
    if has_violations(record):
        raise _typer.Exit(code=EXIT_VIOLATION)


@app.command()
@_exit_on_error
def report(
    run_dir: Path = _typer.Argument(..., help="Run directory"),
    which: str | None = _typer.Option(
        None, "--which", help="Regenerate dualpoly, spikes or calibration CSV"
    ),
    out: Path | None = _typer.Option(None, "--out", help="CSV path for --which"),
) -> None:
    """Summarise a run directory and regenerate its plot data."""
    from .harness import emit_plot_data, load_run

    record = load_run(run_dir)
    print_run_summary(record)
    if which is not None:
        path = emit_plot_data(record, which, out if out is not None else run_dir / f"{which}.csv")
        _typer.echo(f"Wrote {path}", err=True)
