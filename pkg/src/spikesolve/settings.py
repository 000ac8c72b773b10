"""YAML experiment configuration, solver settings and environment helpers."""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import yaml as _yaml

from .errors import ConfigError

# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

_ENV_THREADS = "SPIKESOLVE_THREADS"
_ENV_LOG_BASE = "SPIKESOLVE_LOG_BASE"

_LOG_BASES: dict[str, float] = {"e": math.e, "2": 2.0, "10": 10.0}


def threads_from_env() -> int:
    """Parallelism cap from ``SPIKESOLVE_THREADS``; defaults to the CPU count."""
    raw = os.environ.get(_ENV_THREADS, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigError(f"{_ENV_THREADS} must be a positive integer, got {raw!r}") from e
    if threads < 1:
        raise ConfigError(f"{_ENV_THREADS} must be a positive integer, got {raw!r}")
    return threads


def log_base_from_env() -> float:
    """Base of the logarithm in the lambda rules, from ``SPIKESOLVE_LOG_BASE`` (``e``)."""
    raw = os.environ.get(_ENV_LOG_BASE, "e").strip() or "e"
    try:
        return _LOG_BASES[raw]
    except KeyError as e:
        raise ConfigError(
            f"{_ENV_LOG_BASE} must be one of {sorted(_LOG_BASES)}, got {raw!r}"
        ) from e


# ---------------------------------------------------------------------------
# Dataclasses
# ---------------------------------------------------------------------------


@dataclass
class SolverSettings:
    # Dual constraint grid, in multiples of the family size.
    dual_grid_factor: int = 8
    max_iters: int = 20000
    primal_dual_gap_tol: float = 1e-9
    # Support points are grid maxima with |P| >= 1 - delta_sup.
    delta_sup: float = 1e-3
    refine_tol: float = 1e-6
    # Certification grid for sup-norm brackets, in multiples of the family size.
    certify_grid_factor: int = 1024
    optimality_tol: float = 1e-5
    max_exchange_rounds: int = 40
    # Refit amplitudes by unpenalized least squares after support detection.
    debias: bool = False

    def __post_init__(self) -> None:
        if self.dual_grid_factor < 8:
            raise ConfigError("solver.dual_grid_factor must be at least 8")
        if self.certify_grid_factor < 4:
            raise ConfigError("solver.certify_grid_factor must be at least 4")
        if self.max_iters < 1:
            raise ConfigError("solver.max_iters must be positive")
        if self.max_exchange_rounds < 0:
            raise ConfigError("solver.max_exchange_rounds must be >= 0")
        for name in ("primal_dual_gap_tol", "refine_tol", "optimality_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver.{name} must be positive")
        if not 0 < self.delta_sup < 1:
            raise ConfigError("solver.delta_sup must lie in (0, 1)")


@dataclass
class FamilySpec:
    kind: Literal["fourier", "chebyshev"] = "fourier"
    # f_c for Fourier, degree m for Chebyshev.
    order: int = 64

    def __post_init__(self) -> None:
        if self.kind not in ("fourier", "chebyshev"):
            raise ConfigError(f"family.kind must be 'fourier' or 'chebyshev', got {self.kind!r}")
        if isinstance(self.order, bool) or self.order < 1:
            raise ConfigError(f"family.order must be a positive integer, got {self.order!r}")


@dataclass
class AtomSpec:
    t: float
    amplitude: float
    phase: float = 0.0


@dataclass
class LambdaRule:
    """How the regularization parameter is chosen.

    ``auto`` is lambda_F or lambda_M, ``multiple`` a multiple of it, ``explicit`` a
    fixed value and ``relative`` a fraction of ``||y||_2``.
    """

    mode: Literal["auto", "explicit", "multiple", "relative"]
    value: float = 1.0

    def render(self) -> str:
        if self.mode == "auto":
            return "auto"
        if self.mode == "multiple":
            return f"{self.value!r}x"
        if self.mode == "relative":
            return f"{self.value!r}*|y|"
        return repr(self.value)


_MULTIPLE_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*x\s*$")
_RELATIVE_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*\*\s*\|y\|\s*$")


def parse_lambda_rule(text: str | float) -> LambdaRule:
    """Parse ``auto``, ``2x``, ``1e-3*|y|`` or a plain positive number."""
    if isinstance(text, int | float) and not isinstance(text, bool):
        return _positive_rule("explicit", float(text), text)
    raw = str(text).strip()
    if raw.lower() == "auto":
        return LambdaRule("auto")
    for mode, pattern in (("multiple", _MULTIPLE_RE), ("relative", _RELATIVE_RE)):
        match = pattern.match(raw)
        if match:
            return _positive_rule(mode, _to_float(match.group(1), raw), raw)
    return _positive_rule("explicit", _to_float(raw, raw), raw)


def _to_float(number: str, raw: str) -> float:
    try:
        return float(number)
    except ValueError as e:
        raise ConfigError(f"invalid lambda rule {raw!r}") from e


def _positive_rule(mode: str, value: float, raw: object) -> LambdaRule:
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"lambda must be positive, got {raw!r}")
    return LambdaRule(mode, value)  # type: ignore[arg-type]


@dataclass
class ConstantsSpec:
    source: Literal["fourier-default", "explicit"] = "fourier-default"
    c_a: float | None = None
    c_b: float | None = None
    # Bernstein constant for the moment case; derived from c0 when omitted.
    c_c: float | None = None

    def __post_init__(self) -> None:
        if self.source not in ("fourier-default", "explicit"):
            raise ConfigError("constants.source must be 'fourier-default' or 'explicit'")
        if self.source == "explicit" and (self.c_a is None or self.c_b is None):
            raise ConfigError("explicit constants need both constants.c_a and constants.c_b")


@dataclass
class CalibrationSpec:
    # Levels in units of sigma; empty means five levels around the lambda rule.
    u_values: list[float] = field(default_factory=list)
    mc_trials: int = 2000
    grid_size: int = 8192

    def __post_init__(self) -> None:
        if self.mc_trials < 100:
            raise ConfigError("calibration.mc_trials must be at least 100")


@dataclass
class ExperimentConfig:
    scenario: str = "custom"
    family: FamilySpec = field(default_factory=FamilySpec)
    truth: list[AtomSpec] = field(default_factory=list)
    truth_file: str | None = None
    noise_sigma: float = 1.0
    lambda_rule: str = "auto"
    trials: int = 1
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)
    constants: ConstantsSpec = field(default_factory=ConstantsSpec)
    calibration: CalibrationSpec | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        parse_lambda_rule(self.lambda_rule)

    @property
    def lambda_rule_parsed(self) -> LambdaRule:
        return parse_lambda_rule(self.lambda_rule)


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------


def _solver_settings_to_dict(settings: SolverSettings) -> dict[str, Any]:
    return {
        "dual_grid_factor": settings.dual_grid_factor,
        "max_iters": settings.max_iters,
        "primal_dual_gap_tol": settings.primal_dual_gap_tol,
        "delta_sup": settings.delta_sup,
        "refine_tol": settings.refine_tol,
        "certify_grid_factor": settings.certify_grid_factor,
        "optimality_tol": settings.optimality_tol,
        "max_exchange_rounds": settings.max_exchange_rounds,
        "debias": settings.debias,
    }


_SOLVER_CASTS: dict[str, type] = {
    "dual_grid_factor": int,
    "max_iters": int,
    "primal_dual_gap_tol": float,
    "delta_sup": float,
    "refine_tol": float,
    "certify_grid_factor": int,
    "optimality_tol": float,
    "max_exchange_rounds": int,
}


def _solver_settings_from_dict(d: dict[str, Any]) -> SolverSettings:
    unknown = set(d) - set(_SOLVER_CASTS) - {"debias"}
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {key: cast(d[key]) for key, cast in _SOLVER_CASTS.items() if key in d}
    if "debias" in d:
        if not isinstance(d["debias"], bool):
            raise ConfigError("solver.debias must be a boolean")
        kwargs["debias"] = d["debias"]
    return SolverSettings(**kwargs)


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Full echo of a configuration; every field is written, defaults included."""
    d: dict[str, Any] = {
        "scenario": cfg.scenario,
        "family": {"kind": cfg.family.kind, "order": cfg.family.order},
        "truth": [{"t": a.t, "amplitude": a.amplitude, "phase": a.phase} for a in cfg.truth],
        "truth_file": cfg.truth_file,
        "noise_sigma": cfg.noise_sigma,
        "lambda_rule": cfg.lambda_rule,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "solver": _solver_settings_to_dict(cfg.solver),
        "constants": {
            "source": cfg.constants.source,
            "c_a": cfg.constants.c_a,
            "c_b": cfg.constants.c_b,
            "c_c": cfg.constants.c_c,
        },
        "calibration": None,
    }
    if cfg.calibration is not None:
        d["calibration"] = {
            "u_values": list(cfg.calibration.u_values),
            "mc_trials": cfg.calibration.mc_trials,
            "grid_size": cfg.calibration.grid_size,
        }
    return d


def experiment_config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a mapping")
    fam = d.get("family") or {}
    family = FamilySpec(kind=fam.get("kind", "fourier"), order=int(fam.get("order", 64)))
    truth = [
        AtomSpec(t=float(a["t"]), amplitude=float(a["amplitude"]), phase=float(a.get("phase", 0)))
        for a in d.get("truth") or []
    ]
    const = d.get("constants") or {}
    constants = ConstantsSpec(
        source=const.get("source", "fourier-default"),
        c_a=_optional_float(const.get("c_a")),
        c_b=_optional_float(const.get("c_b")),
        c_c=_optional_float(const.get("c_c")),
    )
    calibration = None
    if d.get("calibration") is not None:
        cal = d["calibration"]
        calibration = CalibrationSpec(
            u_values=[float(u) for u in cal.get("u_values") or []],
            mc_trials=int(cal.get("mc_trials", 2000)),
            grid_size=int(cal.get("grid_size", 8192)),
        )
    return ExperimentConfig(
        scenario=str(d.get("scenario", "custom")),
        family=family,
        truth=truth,
        truth_file=d.get("truth_file"),
        noise_sigma=float(d.get("noise_sigma", 1.0)),
        lambda_rule=str(d.get("lambda_rule", "auto")),
        trials=int(d.get("trials", 1)),
        seed=int(d.get("seed", 0)),
        solver=_solver_settings_from_dict(d.get("solver") or {}),
        constants=constants,
        calibration=calibration,
    )


def _optional_float(value: Any) -> float | None:
    return None if value is None else float(value)


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read an experiment YAML file.

    Raises ``ConfigError`` naming the file for missing, empty or invalid content.
    """
    if not path.is_file():
        raise ConfigError(f"Experiment config not found: {path}")
    try:
        with open(path) as f:
            data = _yaml.safe_load(f)
        if not data:
            raise ConfigError("File is empty")
        return experiment_config_from_dict(data)
    except (ConfigError, _yaml.YAMLError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Error loading {path}: {e}") from e


def save_experiment_config(cfg: ExperimentConfig, path: Path) -> Path:
    """Write an experiment YAML file. Returns path written."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        _yaml.safe_dump(
            experiment_config_to_dict(cfg), f, default_flow_style=False, sort_keys=False
        )
    return path
