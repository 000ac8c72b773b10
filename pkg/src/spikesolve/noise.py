"""Gaussian noise models, Rice tail bounds and regularization-parameter rules.

The tail bounds are stated for unit-variance noise. Callers with a noise level
``sigma`` evaluate them at ``u / sigma``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import numpy.typing as npt
from scipy.stats import binomtest

from .errors import DomainError
from .families import (
    FamilyKind,
    MeasurementFamily,
    SampleVector,
    evaluate_grid,
    sup_norm_certified,
)
from .measure import FloatArray
from .settings import log_base_from_env

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1
_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Minimum Monte Carlo grid, in multiples of the family size.
MC_GRID_FACTOR = 8
MIN_MC_TRIALS = 100

# Relative tolerance when comparing lambda against lambda_F / lambda_M.
_THRESHOLD_RTOL = 1e-12


class NoiseKind(StrEnum):
    COMPLEX_GAUSSIAN = "complex-gaussian"
    REAL_GAUSSIAN = "real-gaussian"


class CorollaryCase(StrEnum):
    FOURIER = "fourier"
    MOMENT = "moment"


@dataclass(frozen=True, slots=True)
class NoiseModel:
    """Gaussian noise on the samples; ``seed`` selects the Philox key family."""

    kind: NoiseKind
    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise DomainError(f"sigma must be a finite value >= 0, got {self.sigma!r}")
        if not 0 <= self.seed <= _SEED_MASK:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @classmethod
    def for_family(cls, fam: MeasurementFamily, sigma: float, seed: int = 0) -> NoiseModel:
        kind = NoiseKind.COMPLEX_GAUSSIAN if fam.is_fourier else NoiseKind.REAL_GAUSSIAN
        return cls(kind, sigma, seed)


@dataclass(frozen=True, slots=True)
class TailBound:
    u: float
    probability_bound: float
    regime_valid: bool


@dataclass(frozen=True, slots=True)
class TailEstimate:
    """Empirical exceedance fraction of the grid maximum with a 95% Wilson interval."""

    u: float
    exceedance: float
    low: float
    high: float
    trials: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)


@dataclass(frozen=True, slots=True)
class CalibrationRow:
    u: float
    analytic_bound: float
    regime_valid: bool
    mc_exceedance: float
    mc_low: float
    mc_high: float
    trials: int


@dataclass(frozen=True, slots=True)
class NoiseNorms:
    """Realized ``||eps||_2`` and a certified bracket on ``lambda_0 = ||<eps, Phi>||_inf``."""

    l2: float
    lambda0_lower: float
    lambda0_upper: float


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Philox substream for one trial, keyed by ``seed XOR trial``."""
    return np.random.Generator(np.random.Philox(key=(seed ^ trial) & _SEED_MASK))


def _box_muller(rng: np.random.Generator, pairs: int) -> tuple[FloatArray, FloatArray]:
    u1 = 1.0 - rng.random(pairs)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    return radius * np.cos(angle), radius * np.sin(angle)


def sample_noise(model: NoiseModel, fam: MeasurementFamily, trial: int = 0) -> SampleVector:
    """Draw one noise vector; identical ``(seed, trial)`` give identical vectors."""
    expected = NoiseKind.COMPLEX_GAUSSIAN if fam.is_fourier else NoiseKind.REAL_GAUSSIAN
    if model.kind is not expected:
        raise DomainError(f"{model.kind} noise does not match {fam.describe()}")
    if model.sigma == 0:
        return SampleVector.zero(fam)
    rng = trial_generator(model.seed, trial)
    if model.kind is NoiseKind.COMPLEX_GAUSSIAN:
        re, im = _box_muller(rng, fam.size)
        return SampleVector(fam, model.sigma * (re + 1j * im))
    first, second = _box_muller(rng, (fam.size + 1) // 2)
    values = np.concatenate([first, second])[: fam.size]
    return SampleVector(fam, model.sigma * values.astype(np.complex128))


def noise_norms(
    fam: MeasurementFamily, eps: SampleVector, grid_size: int | None = None
) -> NoiseNorms:
    """Both noise functionals used to condition the localization theorems."""
    grid = grid_size if grid_size is not None else 64 * fam.size
    lower, upper = sup_norm_certified(eps.as_polynomial(), grid)
    return NoiseNorms(l2=eps.norm(), lambda0_lower=lower, lambda0_upper=upper)


# ---------------------------------------------------------------------------
# Closed-form tail bounds
# ---------------------------------------------------------------------------


def rice_poly_tail(m: int, u: float) -> TailBound:
    """Tail of ``max |X_m|`` for the normalized Chebyshev Gaussian polynomial.

    Valid for ``m >= 12`` and ``u > sqrt(1 + 2m)``; outside that regime the bound
    is reported as 1 with ``regime_valid`` false.
    """
    if u <= 0:
        raise DomainError(f"level u must be positive, got {u!r}")
    variance = 1.0 + 2.0 * m
    if m < 12 or u <= math.sqrt(variance):
        return TailBound(u, 1.0, False)
    raw = 4.0 * m * (1.0 + u) / _SQRT_2PI * math.exp(-(u**2) / variance)
    return TailBound(u, min(1.0, raw), True)


def rice_fourier_tail(f_c: int, u: float) -> TailBound:
    """Tail of ``sup |Z|`` for the complex Gaussian trigonometric polynomial of cut-off f_c."""
    if f_c < 1:
        raise DomainError(f"f_c must be >= 1, got {f_c!r}")
    if u <= math.sqrt(2.0):
        return TailBound(u, 1.0, False)
    variance = 2.0 * f_c + 1.0
    raw = 4.0 * (
        math.exp(-(u**2) / (2.0 * variance))
        + math.sqrt(f_c * (f_c + 1) / 3.0) * math.exp(-(u**2) / (4.0 * variance))
    )
    return TailBound(u, min(1.0, raw), True)


def _log(x: float, base: float | None) -> float:
    b = log_base_from_env() if base is None else base
    return math.log(x) / math.log(b)


def lambda_fourier(f_c: int, sigma: float, *, log_base: float | None = None) -> float:
    """``lambda_F = 2 sigma sqrt(6 f_c log f_c)``."""
    if f_c < 2:
        raise DomainError(f"lambda_F needs f_c >= 2, got {f_c!r}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    return 2.0 * sigma * math.sqrt(6.0 * f_c * _log(f_c, log_base))


def lambda_moment(m: int, sigma: float, *, log_base: float | None = None) -> float:
    """``lambda_M = sigma sqrt(6 m log m)``."""
    if m < 9:
        raise DomainError(f"lambda_M needs m >= 9, got {m!r}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    return sigma * math.sqrt(6.0 * m * _log(m, log_base))


def failure_probability(
    case: CorollaryCase | str,
    *,
    size: int,
    sigma: float,
    lam: float,
    log_base: float | None = None,
) -> float:
    """Probability that the noise event of the Fourier or moment corollary fails.

    ``size`` is f_c in the Fourier case and m in the moment case.

    * Fourier: ``2 exp(-(log f_c) lam^2 / lambda_F^2)``.
    * Moment: ``(8 sqrt(6) / sqrt(2 pi)) (lam / lambda_M) sqrt(log m)
      exp(-(2 lam^2 / lambda_M^2 - 1) log m)``.
    """
    which = CorollaryCase(str(case))
    if which is CorollaryCase.FOURIER:
        threshold = lambda_fourier(size, sigma, log_base=log_base)
    else:
        threshold = lambda_moment(size, sigma, log_base=log_base)
    if lam < threshold * (1.0 - _THRESHOLD_RTOL):
        raise DomainError(
            f"lambda={lam:.6g} is below the {which} threshold {threshold:.6g}; "
            "the corollary's noise event bound does not apply"
        )
    ratio = lam / threshold
    log_size = _log(size, log_base)
    if which is CorollaryCase.FOURIER:
        raw = 2.0 * math.exp(-log_size * ratio**2)
    else:
        raw = (
            8.0
            * math.sqrt(6.0)
            / _SQRT_2PI
            * ratio
            * math.sqrt(log_size)
            * math.exp(-(2.0 * ratio**2 - 1.0) * log_size)
        )
    return min(1.0, max(0.0, raw))


def analytic_tail(fam: MeasurementFamily, sigma: float, u: float) -> TailBound:
    """Closed-form bound of the right proposition for ``fam`` at level ``u`` and noise ``sigma``."""
    if sigma == 0:
        return TailBound(u, 0.0, True)
    if fam.kind is FamilyKind.FOURIER:
        return rice_fourier_tail(fam.order, u / sigma)
    return rice_poly_tail(fam.order, u / sigma)


# ---------------------------------------------------------------------------
# Chebyshev Gaussian process
# ---------------------------------------------------------------------------


def chebyshev_covariance(m: int, t: npt.ArrayLike, s: npt.ArrayLike) -> FloatArray:
    """``r(s, t) = sum_k phi_k(t) phi_k(s)`` for the unit-variance Chebyshev process."""
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
    ss = np.atleast_1d(np.asarray(s, dtype=np.float64)).ravel()
    if tt.shape != ss.shape:
        raise DomainError("covariance arguments must have matching shapes")
    if tt.size and (np.abs(tt).max() > 1 or np.abs(ss).max() > 1):
        raise DomainError("Chebyshev process points must lie in [-1, 1]")
    fam = MeasurementFamily.chebyshev(m)
    return np.asarray(np.sum(fam.basis(tt).real * fam.basis(ss).real, axis=1), dtype=np.float64)


def chebyshev_variance(m: int, t: npt.ArrayLike) -> FloatArray:
    """Variance function ``1 + 2 sum T_k(t)^2``; equals ``2m + 1`` at ``t = +-1``."""
    return chebyshev_covariance(m, t, t)


# ---------------------------------------------------------------------------
# Monte Carlo validation
# ---------------------------------------------------------------------------


def _trial_maximum(model: NoiseModel, fam: MeasurementFamily, trial: int, grid_size: int) -> float:
    eps = sample_noise(model, fam, trial)
    _, values = evaluate_grid(eps.as_polynomial(), grid_size)
    return float(np.abs(values).max())


def _wilson(count: int, trials: int) -> tuple[float, float]:
    ci = binomtest(count, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def monte_carlo_sup_tail(
    fam: MeasurementFamily,
    model: NoiseModel,
    u_list: Sequence[float],
    trials: int,
    grid_size: int,
    *,
    threads: int = 1,
) -> list[TailEstimate]:
    """Fraction of trials whose grid maximum of ``|<eps, Phi>|`` exceeds each level.

    The grid maximum never exceeds the true supremum, so the fraction
    underestimates the true tail. Trials run on per-trial substreams; the
    counts do not depend on scheduling.
    """
    if trials < MIN_MC_TRIALS:
        raise DomainError(f"Monte Carlo needs at least {MIN_MC_TRIALS} trials, got {trials}")
    if grid_size < MC_GRID_FACTOR * fam.size:
        raise DomainError(
            f"Monte Carlo grid of {grid_size} points is too coarse for {fam.describe()}"
        )
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        maxima = np.fromiter(
            pool.map(lambda t: _trial_maximum(model, fam, t, grid_size), range(trials)),
            dtype=np.float64,
            count=trials,
        )
    estimates: list[TailEstimate] = []
    for u in u_list:
        count = int(np.count_nonzero(maxima > u))
        low, high = _wilson(count, trials)
        estimates.append(TailEstimate(float(u), count / trials, low, high, trials))
    logger.info(
        "monte carlo: %s, %d trials, grid %d, max of maxima %.6g",
        fam.describe(),
        trials,
        grid_size,
        float(maxima.max()),
    )
    return estimates


def calibration_table(
    fam: MeasurementFamily,
    model: NoiseModel,
    u_list: Sequence[float],
    trials: int,
    grid_size: int,
    *,
    threads: int = 1,
) -> list[CalibrationRow]:
    """Closed-form bound next to the Monte Carlo estimate for every level."""
    rows: list[CalibrationRow] = []
    estimates = monte_carlo_sup_tail(fam, model, u_list, trials, grid_size, threads=threads)
    for est in estimates:
        bound = analytic_tail(fam, model.sigma, est.u)
        if not bound.regime_valid:
            logger.warning(
                "level u=%.6g lies outside the tail bound's regime for %s", est.u, fam.describe()
            )
        rows.append(
            CalibrationRow(
                u=est.u,
                analytic_bound=bound.probability_bound,
                regime_valid=bound.regime_valid,
                mc_exceedance=est.exceedance,
                mc_low=est.low,
                mc_high=est.high,
                trials=est.trials,
            )
        )
    return rows
