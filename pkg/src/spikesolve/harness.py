"""Seeded experiment pipelines, built-in scenarios and run-directory artifacts.

A run simulates every trial, solves the BLASSO, checks the localization and
detection guarantees on the trials whose realized noise meets the theorems'
event, and writes a self-describing run directory::

    config.json       full configuration echo
    results.json      RunRecord (trials, aggregate, corollary, calibration)
    guarantees.json   per-trial guarantee details
    trials.csv        one row per trial
    spikes.csv        truth and estimate atoms aligned per trial
    dualpoly.csv      trial-0 dual polynomial on a fine grid
    calibration.csv   Rice bound against Monte Carlo, when calibration is on
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import msgspec as _msgspec
import numpy as np

from . import protocol as _proto
from .certificates import FOURIER_QIC, QicConstants, certificate_for
from .errors import ConfigError, SpikeSolveError
from .families import GeneralizedPolynomial, MeasurementFamily, SampleVector, evaluate_grid, forward
from .guarantees import (
    CorollaryReport,
    GuaranteeConstants,
    bregman_diagnostic,
    fourier_constants,
    fourier_guarantees,
    general_constants,
    input_detection,
    moment_constants,
    moment_guarantees,
    output_localization,
)
from .measure import Atom, DiscreteMeasure
from .noise import (
    NoiseModel,
    calibration_table,
    lambda_fourier,
    lambda_moment,
    noise_norms,
    sample_noise,
)
from .settings import (
    AtomSpec,
    CalibrationSpec,
    ConstantsSpec,
    ExperimentConfig,
    FamilySpec,
    experiment_config_to_dict,
    threads_from_env,
)
from .solver import SolverConfig, prediction_bound_check, solve

logger = logging.getLogger(__name__)

PlotKind = Literal["dualpoly", "spikes", "calibration"]

SCENARIOS = ("five-spikes-fourier", "single-spike-fourier", "chebyshev-decay", "calibration-sweep")

# Points per family member on the dual polynomial plot grid.
DUALPOLY_GRID_FACTOR = 16
# Calibration levels relative to the lambda rule when none are configured.
_DEFAULT_LEVELS = (0.25, 0.5, 0.75, 1.0, 1.25)

_TRIAL_COLUMNS = (
    "trial",
    "noise_l2",
    "lambda0_lower",
    "lambda0_upper",
    "lam",
    "lam_effective",
    "objective",
    "gap",
    "support_size",
    "optimality_passed",
    "cond1_value",
    "cond2_residual",
    "prediction_slack",
    "localization_conditioned",
    "localization_violations",
    "detection_conditioned",
    "detection_violations",
    "bregman_ok",
    "error",
)
_SPIKE_COLUMNS = (
    "trial",
    "truth_t",
    "truth_amplitude",
    "truth_phase",
    "estimate_t",
    "estimate_amplitude",
    "estimate_phase",
    "distance",
)
_DUALPOLY_COLUMNS = ("t", "real", "imag", "modulus", "phase")
_CALIBRATION_COLUMNS = (
    "u",
    "analytic_bound",
    "regime_valid",
    "mc_exceedance",
    "mc_low",
    "mc_high",
    "trials",
)


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

_FIVE_SPIKES = (
    AtomSpec(t=0.1, amplitude=25000.0, phase=0.3),
    AtomSpec(t=0.2, amplitude=20000.0, phase=1.9),
    AtomSpec(t=0.25, amplitude=3000.0, phase=4.0),
    AtomSpec(t=0.55, amplitude=800.0, phase=2.6),
    AtomSpec(t=0.8, amplitude=150.0, phase=5.5),
)
_DECAY_SPIKES = (
    AtomSpec(t=-0.3, amplitude=5000.0, phase=0.0),
    AtomSpec(t=0.0, amplitude=2500.0, phase=math.pi),
    AtomSpec(t=0.35, amplitude=1200.0, phase=0.0),
)


def builtin_scenario(name: str, order: int | None = None) -> ExperimentConfig:
    """Configuration of a named scenario.

    ``order`` picks ``f_c`` for the Fourier scenarios (64 or 128) and ``m`` for
    ``chebyshev-decay`` (16 or 64).
    """
    if name == "five-spikes-fourier":
        f_c = _pick(name, order, (64, 128))
        return ExperimentConfig(
            scenario=name,
            family=FamilySpec(kind="fourier", order=f_c),
            truth=list(_FIVE_SPIKES),
            noise_sigma=1.0,
            lambda_rule="auto",
            trials=50,
        )
    if name == "single-spike-fourier":
        f_c = _pick(name, order, (64, 128))
        return ExperimentConfig(
            scenario=name,
            family=FamilySpec(kind="fourier", order=f_c),
            truth=[AtomSpec(t=0.37, amplitude=1.0, phase=0.8)],
            noise_sigma=0.0,
            lambda_rule="1e-3*|y|",
            trials=1,
        )
    if name == "chebyshev-decay":
        m = _pick(name, order, (16, 64))
        return ExperimentConfig(
            scenario=name,
            family=FamilySpec(kind="chebyshev", order=m),
            truth=list(_DECAY_SPIKES),
            noise_sigma=1.0,
            lambda_rule="auto",
            trials=10,
            constants=ConstantsSpec(source="explicit", c_a=0.05, c_b=0.01),
        )
    if name == "calibration-sweep":
        f_c = _pick(name, order, (16, 64))
        return ExperimentConfig(
            scenario=name,
            family=FamilySpec(kind="fourier", order=f_c),
            noise_sigma=1.0,
            calibration=CalibrationSpec(),
        )
    raise ConfigError(f"unknown scenario {name!r}, expected one of {', '.join(SCENARIOS)}")


def _pick(name: str, order: int | None, allowed: tuple[int, int]) -> int:
    if order is None:
        return allowed[0]
    if order not in allowed:
        raise ConfigError(f"scenario {name!r} supports orders {allowed}, got {order}")
    return order


# ---------------------------------------------------------------------------
# Resolving a configuration
# ---------------------------------------------------------------------------


def family_of(cfg: ExperimentConfig) -> MeasurementFamily:
    if cfg.family.kind == "fourier":
        return MeasurementFamily.fourier(cfg.family.order)
    return MeasurementFamily.chebyshev(cfg.family.order)


def truth_of(cfg: ExperimentConfig, fam: MeasurementFamily) -> DiscreteMeasure:
    """The inline truth, or the measure stored in ``truth_file``."""
    if cfg.truth_file is not None:
        if cfg.truth:
            raise ConfigError("give either truth or truth_file, not both")
        path = Path(cfg.truth_file)
        if not path.is_file():
            raise ConfigError(f"truth file not found: {path}")
        mu = _proto.decode_measure(path.read_bytes())
        if mu.domain != fam.domain:
            raise ConfigError(f"truth file {path} lives on {mu.domain.kind}, not {fam.domain.kind}")
        return mu
    atoms = tuple(Atom(a.t, a.amplitude, a.phase) for a in cfg.truth)
    return DiscreteMeasure(fam.domain, atoms)


def nominal_lambda(cfg: ExperimentConfig, fam: MeasurementFamily) -> float | None:
    """Lambda fixed by the rule, or ``None`` for rules that depend on the samples."""
    rule = cfg.lambda_rule_parsed
    if rule.mode == "explicit":
        return rule.value
    if rule.mode == "relative":
        return None
    if cfg.noise_sigma == 0:
        raise ConfigError(f"lambda rule {cfg.lambda_rule!r} needs noise_sigma > 0")
    if fam.is_fourier:
        threshold = lambda_fourier(fam.order, cfg.noise_sigma)
    else:
        threshold = lambda_moment(fam.order, cfg.noise_sigma)
    return threshold if rule.mode == "auto" else rule.value * threshold


def resolve_lambda(cfg: ExperimentConfig, fam: MeasurementFamily, y: SampleVector) -> float:
    """Lambda for one trial's samples."""
    lam = nominal_lambda(cfg, fam)
    if lam is not None:
        return lam
    norm = y.norm()
    if norm == 0:
        raise ConfigError("a lambda relative to ||y|| needs non-zero samples")
    return cfg.lambda_rule_parsed.value * norm


def constants_of(cfg: ExperimentConfig, fam: MeasurementFamily, lam: float) -> GuaranteeConstants:
    spec = cfg.constants
    if spec.source == "fourier-default":
        if not fam.is_fourier:
            raise ConfigError("fourier-default constants need a Fourier family")
        return fourier_constants(fam.order, lam)
    assert spec.c_a is not None and spec.c_b is not None
    qic = QicConstants(c_a=spec.c_a, c_b=spec.c_b)
    if spec.c_c is not None:
        return general_constants(qic, spec.c_c, fam.effective_m, lam)
    if fam.is_fourier:
        return general_constants(qic, math.pi**2, fam.effective_m, lam)
    return moment_constants(fam.order, qic, lam)


def _qic_of(cfg: ExperimentConfig) -> QicConstants:
    spec = cfg.constants
    if spec.source == "fourier-default":
        return FOURIER_QIC
    assert spec.c_a is not None and spec.c_b is not None
    return QicConstants(c_a=spec.c_a, c_b=spec.c_b)


def corollary_of(
    cfg: ExperimentConfig, fam: MeasurementFamily, truth: DiscreteMeasure
) -> tuple[CorollaryReport | None, str | None]:
    """Corollary constants for the run, or the reason they do not apply."""
    try:
        lam = nominal_lambda(cfg, fam)
        if lam is None:
            return None, "lambda depends on the samples"
        if fam.is_fourier:
            return fourier_guarantees(fam.order, cfg.noise_sigma, lam), None
        return moment_guarantees(
            fam.order, cfg.noise_sigma, lam, _qic_of(cfg), support=truth.locations
        ), None
    except SpikeSolveError as e:
        logger.info("corollary does not apply: %s", e)
        return None, str(e)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class _Context:
    cfg: ExperimentConfig
    fam: MeasurementFamily
    truth: DiscreteMeasure
    clean: SampleVector
    model: NoiseModel
    certificate: GeneralizedPolynomial | None


@dataclass(frozen=True, slots=True)
class _TrialOutcome:
    record: _proto.TrialRecord
    guarantees: _proto.GuaranteesDoc | None
    dual: GeneralizedPolynomial | None


def _certificate(fam: MeasurementFamily, truth: DiscreteMeasure) -> GeneralizedPolynomial | None:
    if not fam.is_fourier or len(truth) == 0:
        return None
    try:
        return certificate_for(truth, fam.order, enforce_regime=False)
    except SpikeSolveError as e:
        logger.info("no certificate for the truth, skipping the Bregman check: %s", e)
        return None


def _run_trial(ctx: _Context, trial: int) -> _TrialOutcome:
    noise = sample_noise(ctx.model, ctx.fam, trial)
    norms = noise_norms(ctx.fam, noise)
    record = _proto.TrialRecord(
        trial=trial,
        noise_l2=norms.l2,
        lambda0_lower=norms.lambda0_lower,
        lambda0_upper=norms.lambda0_upper,
    )
    try:
        y = ctx.clean + noise
        lam = resolve_lambda(ctx.cfg, ctx.fam, y)
        result = solve(ctx.fam, y, SolverConfig.for_family(ctx.fam, lam, ctx.cfg.solver))
        consts = constants_of(ctx.cfg, ctx.fam, result.lam_effective)
        l2_conditioned = norms.l2 <= lam
        sup_conditioned = norms.lambda0_upper <= lam
        loc = output_localization(result, ctx.truth, consts)
        det = input_detection(ctx.truth, result, consts)
        bregman = (
            bregman_diagnostic(ctx.certificate, ctx.truth, result, consts, result.lam_effective)
            if ctx.certificate is not None
            else None
        )
        prediction = prediction_bound_check(ctx.fam, ctx.truth, result, noise, lam)
    except SpikeSolveError as e:
        logger.warning("trial %d failed: %s", trial, e)
        record.error = f"{type(e).__name__}: {e}"
        return _TrialOutcome(record, None, None)

    bregman_ok = None if bregman is None else bregman.within_bound and bregman.nonnegative
    v_loc = loc.violations if l2_conditioned else 0
    v_det = det.violations if sup_conditioned else 0
    record.lam = lam
    record.lam_effective = result.lam_effective
    record.objective = result.objective
    record.gap = _proto.finite_or_none(result.gap)
    record.support_size = len(result.measure)
    record.optimality_passed = result.optimality.passed
    record.cond1_value = result.optimality.cond1_value
    record.cond2_residual = result.optimality.cond2_residual
    record.prediction_slack = prediction.slack
    record.estimate = _proto.measure_to_doc(result.measure)
    record.localization_conditioned = l2_conditioned
    record.localization_violations = v_loc
    record.detection_conditioned = sup_conditioned
    record.detection_violations = v_det
    record.bregman_ok = bregman_ok if l2_conditioned else None
    guarantees = _proto.GuaranteesDoc(
        constants=_proto.constants_to_doc(consts),
        l2_conditioned=l2_conditioned,
        sup_conditioned=sup_conditioned,
        localization=_proto.localization_to_doc(loc),
        detection=_proto.detection_to_doc(det),
        bregman=_proto.bregman_to_doc(bregman) if bregman is not None else None,
        passed=v_loc == 0 and v_det == 0 and record.bregman_ok is not False,
    )
    return _TrialOutcome(record, guarantees, result.dual_coefficients)


def aggregate(trials: Sequence[_proto.TrialRecord]) -> _proto.Aggregate:
    """Counts over per-trial rows; pass rates are taken over conditioned trials only."""

    def rate(conditioned: int, violating: int) -> float | None:
        return (conditioned - violating) / conditioned if conditioned else None

    ok = [t for t in trials if t.error is None]
    c_loc = sum(1 for t in ok if t.localization_conditioned)
    v_loc = sum(1 for t in ok if t.localization_conditioned and t.localization_violations)
    c_det = sum(1 for t in ok if t.detection_conditioned)
    v_det = sum(1 for t in ok if t.detection_conditioned and t.detection_violations)
    return _proto.Aggregate(
        trials=len(trials),
        failed=len(trials) - len(ok),
        optimality_passed=sum(1 for t in ok if t.optimality_passed),
        localization_conditioned=c_loc,
        localization_violating_trials=v_loc,
        localization_pass_rate=rate(c_loc, v_loc),
        detection_conditioned=c_det,
        detection_violating_trials=v_det,
        detection_pass_rate=rate(c_det, v_det),
        bregman_violating_trials=sum(1 for t in ok if t.bregman_ok is False),
        prediction_violating_trials=sum(
            1 for t in ok if t.prediction_slack is not None and t.prediction_slack < 0
        ),
    )


def has_violations(record: _proto.RunRecord) -> bool:
    """Whether any conditioned trial broke a guarantee."""
    agg = record.aggregate
    return (
        agg.localization_violating_trials > 0
        or agg.detection_violating_trials > 0
        or agg.bregman_violating_trials > 0
    )


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def calibration_levels(
    cfg: ExperimentConfig, fam: MeasurementFamily, spec: CalibrationSpec
) -> list[float]:
    """Absolute levels ``u``; configured values are in units of sigma."""
    if cfg.noise_sigma == 0:
        raise ConfigError("calibration needs noise_sigma > 0")
    if spec.u_values:
        return [u * cfg.noise_sigma for u in spec.u_values]
    threshold = (
        lambda_fourier(fam.order, cfg.noise_sigma)
        if fam.is_fourier
        else lambda_moment(fam.order, cfg.noise_sigma)
    )
    return [f * threshold for f in _DEFAULT_LEVELS]


def run_calibration(
    cfg: ExperimentConfig, *, threads: int | None = None
) -> list[_proto.CalibrationRowDoc]:
    fam = family_of(cfg)
    spec = cfg.calibration if cfg.calibration is not None else CalibrationSpec()
    model = NoiseModel.for_family(fam, cfg.noise_sigma, cfg.seed)
    rows = calibration_table(
        fam,
        model,
        calibration_levels(cfg, fam, spec),
        spec.mc_trials,
        spec.grid_size,
        threads=threads if threads is not None else threads_from_env(),
    )
    return _proto.calibration_to_doc(rows)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def run_scenario(
    cfg: ExperimentConfig, out_dir: Path | None = None, *, threads: int | None = None
) -> _proto.RunRecord:
    """Run every trial of ``cfg`` and, with ``out_dir``, write the run directory.

    A configuration without a truth but with a calibration block is a
    calibration-only run and has no trials. Stage errors are recorded on their
    trial and the run goes on.
    """
    fam = family_of(cfg)
    truth = truth_of(cfg, fam)
    workers = threads if threads is not None else threads_from_env()
    calibration_only = len(truth) == 0 and cfg.calibration is not None
    if not calibration_only:
        nominal_lambda(cfg, fam)
        constants_of(cfg, fam, 1.0)

    outcomes: list[_TrialOutcome] = []
    corollary, note = None, None
    if not calibration_only:
        ctx = _Context(
            cfg=cfg,
            fam=fam,
            truth=truth,
            clean=forward(truth, fam),
            model=NoiseModel.for_family(fam, cfg.noise_sigma, cfg.seed),
            certificate=_certificate(fam, truth),
        )
        corollary, note = corollary_of(cfg, fam, truth)
        logger.info("run %s: %d trials on %d threads", cfg.scenario, cfg.trials, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda t: _run_trial(ctx, t), range(cfg.trials)))

    calibration = None
    if cfg.calibration is not None:
        calibration = run_calibration(cfg, threads=workers)

    trials = [o.record for o in outcomes]
    dual = outcomes[0].dual if outcomes else None
    record = _proto.RunRecord(
        config=experiment_config_to_dict(cfg),
        truth=_proto.measure_to_doc(truth) if not calibration_only else None,
        trials=trials,
        aggregate=aggregate(trials),
        dual_trial0=_proto.polynomial_to_doc(dual) if dual is not None else None,
        corollary=_proto.corollary_to_doc(corollary) if corollary is not None else None,
        corollary_note=note,
        calibration=calibration,
    )
    agg = record.aggregate
    logger.info(
        "run %s: %d/%d trials ok, localization %d/%d conditioned clean, detection %d/%d",
        cfg.scenario,
        agg.trials - agg.failed,
        agg.trials,
        agg.localization_conditioned - agg.localization_violating_trials,
        agg.localization_conditioned,
        agg.detection_conditioned - agg.detection_violating_trials,
        agg.detection_conditioned,
    )
    if out_dir is not None:
        guarantees = _proto.GuaranteesFile(trials=[o.guarantees for o in outcomes])
        write_run(record, guarantees, out_dir)
    return record


def write_run(
    record: _proto.RunRecord, guarantees: _proto.GuaranteesFile, out_dir: Path
) -> Path:
    """Write every artifact of ``record`` under ``out_dir``. Returns the directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {"config": "config.json", "guarantees": "guarantees.json", "trials": "trials.csv"}
    (out_dir / "config.json").write_bytes(_proto.encode(record.config))
    (out_dir / "guarantees.json").write_bytes(_proto.encode(guarantees))
    _write_csv(out_dir / "trials.csv", _TRIAL_COLUMNS, _trial_rows(record.trials))
    for which in ("spikes", "dualpoly", "calibration"):
        if _available(record, which):
            emit_plot_data(record, which, out_dir / f"{which}.csv")
            artifacts[which] = f"{which}.csv"
    artifacts["results"] = "results.json"
    record.artifacts = dict(sorted(artifacts.items()))
    (out_dir / "results.json").write_bytes(_proto.encode_run(record))
    logger.info("wrote run directory %s", out_dir)
    return out_dir


def load_run(run_dir: Path) -> _proto.RunRecord:
    path = run_dir / "results.json"
    if not path.is_file():
        raise ConfigError(f"no results.json in {run_dir}")
    return _proto.decode_run(path.read_bytes())


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def _available(record: _proto.RunRecord, which: str) -> bool:
    if which == "dualpoly":
        return record.dual_trial0 is not None
    if which == "spikes":
        return record.truth is not None and any(t.estimate is not None for t in record.trials)
    return bool(record.calibration)


def emit_plot_data(record: _proto.RunRecord, which: PlotKind | str, path: Path) -> Path:
    """Write one plot-ready CSV. Returns the path written.

    * ``dualpoly``: the trial-0 dual polynomial, see :func:`write_dualpoly_csv`.
    * ``spikes``: per trial, every true spike next to its nearest recovered
      atom; recovered atoms matched to no spike follow with empty truth columns.
    * ``calibration``: the calibration table, one row per level.
    """
    rows: Iterable[Sequence[Any]]
    if which == "dualpoly":
        if record.dual_trial0 is None:
            raise ConfigError("run record has no dual polynomial")
        return write_dualpoly_csv(_proto.polynomial_from_doc(record.dual_trial0), path)
    if which == "spikes":
        if not _available(record, "spikes"):
            raise ConfigError("run record has no recovered spikes")
        assert record.truth is not None
        rows = _spike_rows(_proto.measure_from_doc(record.truth), record.trials)
        columns: tuple[str, ...] = _SPIKE_COLUMNS
    elif which == "calibration":
        if not record.calibration:
            raise ConfigError("run record has no calibration table")
        return write_calibration_csv(record.calibration, path)
    else:
        raise ConfigError(f"unknown plot data {which!r}, expected dualpoly, spikes or calibration")
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, columns, rows)
    return path


def write_dualpoly_csv(P: GeneralizedPolynomial, path: Path) -> Path:
    """``t, real, imag, modulus, phase`` of ``P`` on a grid of 16 points per sample."""
    t, values = evaluate_grid(P, DUALPOLY_GRID_FACTOR * P.family.size)
    rows = zip(t, values.real, values.imag, np.abs(values), np.angle(values), strict=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, _DUALPOLY_COLUMNS, rows)
    return path


def write_calibration_csv(rows: Sequence[_proto.CalibrationRowDoc], path: Path) -> Path:
    """Calibration table with the columns of :class:`~spikesolve.noise.CalibrationRow`."""
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, _CALIBRATION_COLUMNS, (_msgspec.structs.astuple(r) for r in rows))
    return path


def _spike_rows(
    truth: DiscreteMeasure, trials: Sequence[_proto.TrialRecord]
) -> Iterable[tuple[Any, ...]]:
    domain = truth.domain
    for trial in trials:
        if trial.estimate is None:
            continue
        est = _proto.measure_from_doc(trial.estimate)
        used: set[int] = set()
        for atom in truth.atoms:
            if len(est):
                dist = np.asarray(domain.distance(est.locations, atom.location), dtype=np.float64)
                k = int(np.argmin(dist))
                used.add(k)
                match = est.atoms[k]
                yield (
                    trial.trial,
                    atom.location,
                    atom.amplitude,
                    atom.phase,
                    match.location,
                    match.amplitude,
                    match.phase,
                    float(dist[k]),
                )
            else:
                yield (trial.trial, atom.location, atom.amplitude, atom.phase) + (None,) * 4
        for k, extra in enumerate(est.atoms):
            if k not in used:
                yield (
                    trial.trial,
                    None,
                    None,
                    None,
                    extra.location,
                    extra.amplitude,
                    extra.phase,
                    None,
                )


def _trial_rows(trials: Sequence[_proto.TrialRecord]) -> Iterable[tuple[Any, ...]]:
    for t in trials:
        yield tuple(getattr(t, name) for name in _TRIAL_COLUMNS)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool | np.bool_):
        return "true" if value else "false"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return "%.17g" % float(value)
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])

