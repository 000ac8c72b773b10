"""Quantitative recovery guarantees: localization, detection, corollary constants.

All radii are ``[2 lambda / (C_a A)]^(1/2) / m`` for an amplitude ``A`` (output
atoms) or ``A = Delta_j - C' lambda`` (true spikes), with ``m`` the family's
effective degree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .certificates import FOURIER_MIN_FC, FOURIER_QIC, PHASE_TOLERANCE, QicConstants
from .errors import DomainError, PreconditionError
from .families import GeneralizedPolynomial, MeasurementFamily
from .measure import DiscreteMeasure, FloatArray, min_separation, nearest_in_set
from .noise import CorollaryCase, failure_probability, lambda_fourier, lambda_moment
from .solver import SolveResult

logger = logging.getLogger(__name__)

#: Constants printed in the Fourier corollary.
FOURIER_RADIUS_COEFFICIENT = 0.1678
FOURIER_MAX_RADIUS = 0.1649
FOURIER_DETECTION = 218.0
MOMENT_MIN_M = 9

# Bounds are compared with this relative allowance for rounding.
_RTOL = 1e-9

_FOURIER_FORMULA = "2 exp(-log(f_c) lambda^2 / lambda_F^2)"
_MOMENT_FORMULA = (
    "(8 sqrt(6) / sqrt(2 pi)) (lambda / lambda_M) sqrt(log m) "
    "exp(-(2 lambda^2 / lambda_M^2 - 1) log m)"
)


@dataclass(frozen=True, slots=True)
class GuaranteeConstants:
    qic: QicConstants
    c_c: float
    c_prime: float
    effective_m: int
    lam: float

    def __post_init__(self) -> None:
        if self.c_c <= 0:
            raise DomainError(f"C_c must be positive, got {self.c_c!r}")
        if self.effective_m < 1:
            raise DomainError(f"effective m must be >= 1, got {self.effective_m!r}")
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam!r}")
        expected = c_prime_for(self.qic, self.c_c)
        if not math.isclose(self.c_prime, expected, rel_tol=1e-12):
            raise DomainError(f"C' = {self.c_prime!r} does not match its parts ({expected!r})")

    @property
    def c0(self) -> float:
        return self.qic.c0

    @property
    def near_radius(self) -> float:
        return self.qic.c0 / self.effective_m

    @property
    def output_threshold(self) -> float:
        """Output atoms heavier than ``2 lambda / C_b`` sit near a true spike."""
        return 2.0 * self.lam / self.qic.c_b

    @property
    def detection_threshold(self) -> float:
        """True spikes heavier than ``C' lambda`` are detected."""
        return self.c_prime * self.lam

    def radius(self, amplitude: float) -> float:
        return math.sqrt(2.0 * self.lam / (self.qic.c_a * amplitude)) / self.effective_m

    def with_lambda(self, lam: float) -> GuaranteeConstants:
        return GuaranteeConstants(self.qic, self.c_c, self.c_prime, self.effective_m, lam)


def c_prime_for(qic: QicConstants, c_c: float) -> float:
    """``C' = 2 + max{2 (1 - C_b) / C_b, C_c / C_a}``."""
    return 2.0 + max(2.0 * (1.0 - qic.c_b) / qic.c_b, c_c / qic.c_a)


def general_constants(
    qic: QicConstants, c_c: float, effective_m: int, lam: float
) -> GuaranteeConstants:
    return GuaranteeConstants(qic, c_c, c_prime_for(qic, c_c), effective_m, lam)


# ---------------------------------------------------------------------------
# Output localization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SpikeRecord:
    """One recovered atom against the output-amplitude threshold."""

    index: int
    location: float
    amplitude: float
    threshold: float
    threshold_passed: bool
    radius: float | None
    nearest_truth_distance: float | None = None
    contained: bool | None = None


@dataclass(frozen=True, slots=True)
class LocalizationBound:
    spikes: tuple[SpikeRecord, ...]
    near_mass_moment: float | None
    near_mass_bound: float
    far_mass: float | None
    far_mass_bound: float
    uniqueness_guaranteed: bool | None
    lam: float

    @property
    def violations(self) -> int:
        count = sum(1 for s in self.spikes if s.contained is False)
        near_limit = self.near_mass_bound * (1.0 + _RTOL)
        if self.near_mass_moment is not None and self.near_mass_moment > near_limit:
            count += 1
        if self.far_mass is not None and self.far_mass > self.far_mass_bound * (1.0 + _RTOL):
            count += 1
        return count

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _as_measure(result: SolveResult | DiscreteMeasure) -> DiscreteMeasure:
    return result.measure if isinstance(result, SolveResult) else result


def output_localization(
    result: SolveResult | DiscreteMeasure,
    truth: DiscreteMeasure | None,
    consts: GuaranteeConstants,
) -> LocalizationBound:
    """Radii around heavy recovered atoms and, with a truth, the two mass sums."""
    mu = _as_measure(result)
    lam, m = consts.lam, consts.effective_m
    threshold = consts.output_threshold
    locs, amps = mu.locations, mu.amplitudes
    dist: FloatArray | None = None
    if truth is not None and len(truth) and len(mu):
        _, dist = nearest_in_set(locs, truth.locations, mu.domain)
    records: list[SpikeRecord] = []
    for k, (t, amp) in enumerate(zip(locs, amps, strict=True)):
        passed = bool(amp > threshold)
        radius = consts.radius(float(amp)) if passed else None
        nearest = float(dist[k]) if dist is not None else None
        contained = None
        if radius is not None and nearest is not None:
            contained = nearest <= radius * (1.0 + _RTOL)
        records.append(
            SpikeRecord(
                index=k,
                location=float(t),
                amplitude=float(amp),
                threshold=threshold,
                threshold_passed=passed,
                radius=radius,
                nearest_truth_distance=nearest,
                contained=contained,
            )
        )

    near_moment: float | None = None
    far_mass: float | None = None
    unique: bool | None = None
    if truth is not None and len(truth):
        if dist is None:
            near_moment, far_mass = 0.0, 0.0
        else:
            near = dist <= consts.near_radius * (1.0 + 1e-12)
            near_moment = float(np.sum(amps[near] * dist[near] ** 2))
            far_mass = float(np.sum(amps[~near]))
        unique = (
            True
            if len(truth) < 2
            else min_separation(truth.locations, truth.domain) > 2.0 * consts.near_radius
        )
    bound = LocalizationBound(
        spikes=tuple(records),
        near_mass_moment=near_moment,
        near_mass_bound=2.0 * lam / (consts.qic.c_a * m**2),
        far_mass=far_mass,
        far_mass_bound=2.0 * lam / consts.qic.c_b,
        uniqueness_guaranteed=unique,
        lam=lam,
    )
    if truth is not None and not bound.passed:
        logger.warning("output localization: %d violations at lambda=%.6g", bound.violations, lam)
    return bound


# ---------------------------------------------------------------------------
# Input detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class DetectionRecord:
    index: int
    location: float
    amplitude: float
    clustered_mass: float
    discrepancy: float
    bound: float
    within_bound: bool
    threshold_passed: bool
    radius: float | None
    nearest_distance: float | None
    contained: bool | None


@dataclass(frozen=True, slots=True)
class DetectionReport:
    spikes: tuple[DetectionRecord, ...]
    c_prime: float
    lam: float

    @property
    def violations(self) -> int:
        return sum(
            1 for s in self.spikes if not s.within_bound or s.contained is False
        )

    @property
    def passed(self) -> bool:
        return self.violations == 0


def input_detection(
    truth: DiscreteMeasure,
    result: SolveResult | DiscreteMeasure,
    consts: GuaranteeConstants,
) -> DetectionReport:
    """Clustered recovered mass around every true spike, and detection radii."""
    mu = _as_measure(result)
    lam, bound = consts.lam, consts.detection_threshold
    records: list[DetectionRecord] = []
    for j, atom in enumerate(truth.atoms):
        if len(mu):
            dist = np.asarray(mu.domain.distance(mu.locations, atom.location), dtype=np.float64)
            near = dist <= consts.near_radius * (1.0 + 1e-12)
            clustered = float(np.sum(mu.amplitudes[near]))
            nearest: float | None = float(dist.min())
        else:
            clustered, nearest = 0.0, None
        discrepancy = abs(atom.amplitude - clustered)
        detected = atom.amplitude > bound
        radius = (
            math.sqrt(2.0 * lam / (consts.qic.c_a * (atom.amplitude - bound))) / consts.effective_m
            if detected
            else None
        )
        contained: bool | None = None
        if radius is not None:
            contained = nearest is not None and nearest <= radius * (1.0 + _RTOL)
        records.append(
            DetectionRecord(
                index=j,
                location=atom.location,
                amplitude=atom.amplitude,
                clustered_mass=clustered,
                discrepancy=discrepancy,
                bound=bound,
                within_bound=discrepancy <= bound * (1.0 + _RTOL),
                threshold_passed=detected,
                radius=radius,
                nearest_distance=nearest,
                contained=contained,
            )
        )
    report = DetectionReport(spikes=tuple(records), c_prime=consts.c_prime, lam=lam)
    if not report.passed:
        logger.warning("input detection: %d violations at lambda=%.6g", report.violations, lam)
    return report


# ---------------------------------------------------------------------------
# Corollaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CorollaryReport:
    """Constants and thresholds of one corollary at a given noise level and lambda.

    ``max_radius`` is the printed corollary constant over ``f_c`` (Fourier) or
    ``c0/m``; ``guaranteed_max_radius`` is always ``c0/m``.
    """

    case: CorollaryCase
    constants: GuaranteeConstants
    sigma: float
    lambda_threshold: float
    failure_probability: float
    failure_formula: str
    detection_threshold: float
    output_threshold: float
    max_radius: float
    guaranteed_max_radius: float
    radius_coefficient: float | None
    radius_consistency: float | None


def fourier_constants(f_c: int, lam: float) -> GuaranteeConstants:
    """Fourier guarantee constants without the corollary's regime gates."""
    if f_c < 1:
        raise DomainError(f"f_c must be >= 1, got {f_c!r}")
    return general_constants(FOURIER_QIC, math.pi**2, 2 * f_c, lam)


def fourier_guarantees(
    f_c: int, sigma: float, lam: float, *, log_base: float | None = None
) -> CorollaryReport:
    """Corollary constants for Fourier samples with cut-off ``f_c``."""
    if f_c < FOURIER_MIN_FC:
        raise PreconditionError(f"the Fourier corollary needs f_c >= {FOURIER_MIN_FC}, got {f_c}")
    threshold = lambda_fourier(f_c, sigma, log_base=log_base)
    if lam < threshold * (1.0 - 1e-12):
        raise PreconditionError(f"lambda={lam:.6g} is below lambda_F={threshold:.6g}")
    consts = fourier_constants(f_c, lam)
    prob = failure_probability(
        CorollaryCase.FOURIER, size=f_c, sigma=sigma, lam=lam, log_base=log_base
    )
    guaranteed_radius = consts.c0 / consts.effective_m
    corollary_radius = FOURIER_MAX_RADIUS / f_c
    # sqrt(lam / (0.1678 A)) / f_c against sqrt(2 lam / (C_a A)) / (2 f_c)
    consistency = math.sqrt(2.0 / FOURIER_QIC.c_a) / 2.0 * math.sqrt(FOURIER_RADIUS_COEFFICIENT)
    consistency = abs(consistency - 1.0)
    logger.debug("radius coefficient consistency residual: %.3g", consistency)
    mismatch = abs(guaranteed_radius - corollary_radius) / corollary_radius
    if mismatch > 1e-3:
        logger.warning(
            "maximal radius: c0/m gives %.4f/f_c, the corollary prints %.4f/f_c (%.2f%% apart)",
            guaranteed_radius * f_c,
            FOURIER_MAX_RADIUS,
            100.0 * mismatch,
        )
    return CorollaryReport(
        case=CorollaryCase.FOURIER,
        constants=consts,
        sigma=sigma,
        lambda_threshold=threshold,
        failure_probability=prob,
        failure_formula=_FOURIER_FORMULA,
        detection_threshold=FOURIER_DETECTION * lam,
        output_threshold=consts.output_threshold,
        max_radius=corollary_radius,
        guaranteed_max_radius=guaranteed_radius,
        radius_coefficient=FOURIER_RADIUS_COEFFICIENT,
        radius_consistency=consistency,
    )


def moment_constants(m: int, qic: QicConstants, lam: float) -> GuaranteeConstants:
    """Moment-case constants with ``C_c = 4 / (1 - c0^2)``.

    Then ``C_c / C_a = 4 / (C_a - C_b)``, the second branch of ``C'``.
    """
    if qic.c_a <= qic.c_b:
        raise DomainError(f"moment constants need C_a > C_b, got {qic!r}")
    c0 = qic.c0
    return general_constants(qic, 4.0 / (1.0 - c0**2), m, lam)


def moment_guarantees(
    m: int,
    sigma: float,
    lam: float,
    qic: QicConstants,
    *,
    support: FloatArray | None = None,
    log_base: float | None = None,
) -> CorollaryReport:
    """Corollary constants for Chebyshev moments of degree ``m``.

    When ``support`` is given it must stay ``2 c0`` away from both endpoints.
    """
    if m < MOMENT_MIN_M:
        raise DomainError(f"the moment corollary needs m >= {MOMENT_MIN_M}, got {m}")
    threshold = lambda_moment(m, sigma, log_base=log_base)
    if lam < threshold * (1.0 - 1e-12):
        raise PreconditionError(f"lambda={lam:.6g} is below lambda_M={threshold:.6g}")
    if support is not None and np.size(support):
        edge = float(np.min(1.0 - np.abs(np.asarray(support, dtype=np.float64))))
        if edge < 2.0 * qic.c0:
            raise PreconditionError(
                f"support lies {edge:.6g} from the endpoints, closer than 2 c0 = {2.0 * qic.c0:.6g}"
            )
    consts = moment_constants(m, qic, lam)
    prob = failure_probability(
        CorollaryCase.MOMENT, size=m, sigma=sigma, lam=lam, log_base=log_base
    )
    radius = consts.c0 / m
    return CorollaryReport(
        case=CorollaryCase.MOMENT,
        constants=consts,
        sigma=sigma,
        lambda_threshold=threshold,
        failure_probability=prob,
        failure_formula=_MOMENT_FORMULA,
        detection_threshold=consts.detection_threshold,
        output_threshold=consts.output_threshold,
        max_radius=radius,
        guaranteed_max_radius=radius,
        radius_coefficient=None,
        radius_consistency=None,
    )


# ---------------------------------------------------------------------------
# Bregman divergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class BregmanReport:
    d_value: float
    bound_2lambda: float
    weak_wasserstein_sum: float
    within_bound: bool
    nonnegative: bool


def bregman_diagnostic(
    P: GeneralizedPolynomial,
    truth: DiscreteMeasure,
    result: SolveResult | DiscreteMeasure,
    consts: GuaranteeConstants,
    lam: float,
) -> BregmanReport:
    """Bregman divergence of the TV norm at ``truth`` along the certificate ``P``.

    ``d = sum_k A_k [1 - |P|(T_k) cos(theta_k + arg P(T_k))]`` over the recovered
    atoms, and its lower sum ``sum_k A_k min{C_a m^2 d(T_k, S)^2, C_b}``.
    """
    if len(truth) == 0:
        raise DomainError("the Bregman diagnostic needs a non-empty truth")
    fam: MeasurementFamily = P.family
    miss = float(np.max(np.abs(P(truth.locations) - np.exp(-1j * truth.phases))))
    if miss > PHASE_TOLERANCE:
        raise PreconditionError(
            f"polynomial does not interpolate the truth phases (residual {miss:.3g})"
        )
    mu = _as_measure(result)
    if len(mu) == 0:
        d_value, lower = 0.0, 0.0
    else:
        values = P(mu.locations)
        d_value = float(
            np.sum(mu.amplitudes * (1.0 - np.abs(values) * np.cos(mu.phases + np.angle(values))))
        )
        _, dist = nearest_in_set(mu.locations, truth.locations, fam.domain)
        m = consts.effective_m
        lower = float(
            np.sum(mu.amplitudes * np.minimum(consts.qic.c_a * m**2 * dist**2, consts.qic.c_b))
        )
    bound = 2.0 * lam
    return BregmanReport(
        d_value=d_value,
        bound_2lambda=bound,
        weak_wasserstein_sum=lower,
        within_bound=d_value <= bound * (1.0 + _RTOL),
        nonnegative=d_value >= -1e-12 * max(1.0, bound),
    )
