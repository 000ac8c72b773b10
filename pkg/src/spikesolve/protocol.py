"""JSON document types for measures, samples, results and run records.

Every document is a ``msgspec.Struct``; floats are written in their shortest
round-trip form. Non-finite floats are stored as ``null``.
"""

from __future__ import annotations

import math
from typing import Any

import msgspec as _msgspec
import numpy as np

from .certificates import CertificateReport
from .errors import ConfigError
from .families import FamilyKind, GeneralizedPolynomial, MeasurementFamily, SampleVector
from .guarantees import (
    BregmanReport,
    CorollaryReport,
    DetectionReport,
    GuaranteeConstants,
    LocalizationBound,
)
from .measure import Atom, DiscreteMeasure, domain_from_name
from .noise import CalibrationRow
from .solver import OptimalityReport, SolveResult

RUN_FORMAT = "spikesolve-run/1"
GUARANTEES_FORMAT = "spikesolve-guarantees/1"

# ---------------------------------------------------------------------------
# Measures and samples
# ---------------------------------------------------------------------------


class AtomDoc(_msgspec.Struct):
    t: float
    amplitude: float
    phase: float


class MeasureDoc(_msgspec.Struct):
    domain: str
    atoms: list[AtomDoc] = []


class SamplesDoc(_msgspec.Struct, kw_only=True, omit_defaults=True):
    family: str
    y: list[tuple[float, float]]
    fc: int | None = None
    degree: int | None = None
    sigma: float | None = None


class PolynomialDoc(_msgspec.Struct, kw_only=True, omit_defaults=True):
    """Coefficients ``a`` of ``P = sum_k conj(a_k) phi_k``."""

    family: str
    coefficients: list[tuple[float, float]]
    fc: int | None = None
    degree: int | None = None


def finite_or_none(x: float | None) -> float | None:
    if x is None:
        return None
    return float(x) if math.isfinite(x) else None


def _pairs(values: Any) -> list[tuple[float, float]]:
    return [(float(v.real), float(v.imag)) for v in np.asarray(values, dtype=np.complex128)]


def _family_fields(fam: MeasurementFamily) -> dict[str, Any]:
    if fam.is_fourier:
        return {"family": "fourier", "fc": fam.order}
    return {"family": "chebyshev", "degree": fam.order}


def _family_from_fields(family: str, fc: int | None, degree: int | None) -> MeasurementFamily:
    try:
        kind = FamilyKind(family)
    except ValueError as e:
        raise ConfigError(f"unknown family {family!r}") from e
    order = fc if kind is FamilyKind.FOURIER else degree
    if order is None:
        key = "fc" if kind is FamilyKind.FOURIER else "degree"
        raise ConfigError(f"{family} samples need the {key!r} field")
    return MeasurementFamily(kind, order)


def measure_to_doc(mu: DiscreteMeasure) -> MeasureDoc:
    return MeasureDoc(
        domain=str(mu.domain.kind),
        atoms=[AtomDoc(t=a.location, amplitude=a.amplitude, phase=a.phase) for a in mu.atoms],
    )


def measure_from_doc(doc: MeasureDoc) -> DiscreteMeasure:
    atoms = tuple(Atom(a.t, a.amplitude, a.phase) for a in doc.atoms)
    return DiscreteMeasure(domain=domain_from_name(doc.domain), atoms=atoms)


def samples_to_doc(y: SampleVector, sigma: float | None = None) -> SamplesDoc:
    return SamplesDoc(y=_pairs(y.values), sigma=sigma, **_family_fields(y.family))


def samples_from_doc(doc: SamplesDoc) -> tuple[SampleVector, float | None]:
    fam = _family_from_fields(doc.family, doc.fc, doc.degree)
    values = np.array([complex(re, im) for re, im in doc.y], dtype=np.complex128)
    return SampleVector(fam, values), doc.sigma


def polynomial_to_doc(P: GeneralizedPolynomial) -> PolynomialDoc:
    return PolynomialDoc(coefficients=_pairs(P.coefficients), **_family_fields(P.family))


def polynomial_from_doc(doc: PolynomialDoc) -> GeneralizedPolynomial:
    fam = _family_from_fields(doc.family, doc.fc, doc.degree)
    coeffs = np.array([complex(re, im) for re, im in doc.coefficients], dtype=np.complex128)
    return GeneralizedPolynomial(fam, coeffs)


# ---------------------------------------------------------------------------
# Solver and certificate outputs
# ---------------------------------------------------------------------------


class OptimalityDoc(_msgspec.Struct):
    cond1_value: float
    cond1_lower: float
    cond2_residual: float
    tol: float
    passed: bool


class ResultDoc(_msgspec.Struct, kw_only=True):
    measure: MeasureDoc
    objective: float
    gap: float
    optimality: OptimalityDoc
    lam: float
    lam_effective: float
    feasibility_slack: float
    dual_iterations: int
    exchange_rounds: int
    amplitude_condition: float | None
    ill_conditioned: bool
    cardinality_ok: bool
    dual_coefficients: PolynomialDoc
    debiased: MeasureDoc | None = None


class CertificateDoc(_msgspec.Struct, kw_only=True):
    passed: bool
    c_a: float = _msgspec.field(name="C_a")
    c_b: float = _msgspec.field(name="C_b")
    phase_residual: float
    derivative_residual: float
    qic_margin: float | None
    near_margin: float | None
    far_margin: float | None
    grid_size: int


def optimality_to_doc(report: OptimalityReport) -> OptimalityDoc:
    return OptimalityDoc(
        cond1_value=report.cond1_value,
        cond1_lower=report.cond1_lower,
        cond2_residual=report.cond2_residual,
        tol=report.tol,
        passed=report.passed,
    )


def result_to_doc(result: SolveResult) -> ResultDoc:
    return ResultDoc(
        measure=measure_to_doc(result.measure),
        objective=result.objective,
        gap=result.gap,
        optimality=optimality_to_doc(result.optimality),
        lam=result.lam,
        lam_effective=result.lam_effective,
        feasibility_slack=result.feasibility_slack,
        dual_iterations=result.dual_iterations,
        exchange_rounds=result.exchange_rounds,
        amplitude_condition=finite_or_none(result.amplitude_condition),
        ill_conditioned=result.ill_conditioned,
        cardinality_ok=result.cardinality_ok,
        dual_coefficients=polynomial_to_doc(result.dual_coefficients),
        debiased=measure_to_doc(result.debiased) if result.debiased is not None else None,
    )


def certificate_to_doc(report: CertificateReport) -> CertificateDoc:
    return CertificateDoc(
        passed=report.passed,
        c_a=report.qic.c_a,
        c_b=report.qic.c_b,
        phase_residual=report.phase_residual,
        derivative_residual=report.derivative_residual,
        qic_margin=finite_or_none(report.qic_margin),
        near_margin=finite_or_none(report.near_margin),
        far_margin=finite_or_none(report.far_margin),
        grid_size=report.grid_size,
    )


# ---------------------------------------------------------------------------
# Guarantees
# ---------------------------------------------------------------------------


class ConstantsDoc(_msgspec.Struct):
    c_a: float
    c_b: float
    c0: float
    c_c: float
    c_prime: float
    effective_m: int
    lam: float


class SpikeDoc(_msgspec.Struct):
    spike_id: int
    location: float
    amplitude: float
    threshold: float
    radius: float | None
    nearest_truth_distance: float | None
    contained: bool | None


class LocalizationDoc(_msgspec.Struct):
    spikes: list[SpikeDoc]
    near_mass_moment: float | None
    near_mass_bound: float
    far_mass: float | None
    far_mass_bound: float
    uniqueness_guaranteed: bool | None
    passed: bool


class DetectionDoc(_msgspec.Struct):
    spike_id: int
    location: float
    amplitude: float
    clustered_mass: float
    discrepancy: float
    bound: float
    radius: float | None
    nearest_distance: float | None
    contained: bool | None
    within_bound: bool


class BregmanDoc(_msgspec.Struct):
    d_value: float
    bound_2lambda: float
    weak_wasserstein_sum: float
    within_bound: bool


class CorollaryDoc(_msgspec.Struct):
    case: str
    constants: ConstantsDoc
    lambda_threshold: float
    failure_probability: float
    failure_formula: str
    detection_threshold: float
    output_threshold: float
    max_radius: float
    guaranteed_max_radius: float
    radius_coefficient: float | None
    radius_consistency: float | None


class GuaranteesDoc(_msgspec.Struct, kw_only=True):
    constants: ConstantsDoc
    l2_conditioned: bool
    sup_conditioned: bool
    localization: LocalizationDoc | None = None
    detection: list[DetectionDoc] | None = None
    bregman: BregmanDoc | None = None
    passed: bool


def constants_to_doc(consts: GuaranteeConstants) -> ConstantsDoc:
    return ConstantsDoc(
        c_a=consts.qic.c_a,
        c_b=consts.qic.c_b,
        c0=consts.c0,
        c_c=consts.c_c,
        c_prime=consts.c_prime,
        effective_m=consts.effective_m,
        lam=consts.lam,
    )


def localization_to_doc(bound: LocalizationBound) -> LocalizationDoc:
    return LocalizationDoc(
        spikes=[
            SpikeDoc(
                spike_id=s.index,
                location=s.location,
                amplitude=s.amplitude,
                threshold=s.threshold,
                radius=s.radius,
                nearest_truth_distance=s.nearest_truth_distance,
                contained=s.contained,
            )
            for s in bound.spikes
        ],
        near_mass_moment=bound.near_mass_moment,
        near_mass_bound=bound.near_mass_bound,
        far_mass=bound.far_mass,
        far_mass_bound=bound.far_mass_bound,
        uniqueness_guaranteed=bound.uniqueness_guaranteed,
        passed=bound.passed,
    )


def detection_to_doc(report: DetectionReport) -> list[DetectionDoc]:
    return [
        DetectionDoc(
            spike_id=s.index,
            location=s.location,
            amplitude=s.amplitude,
            clustered_mass=s.clustered_mass,
            discrepancy=s.discrepancy,
            bound=s.bound,
            radius=s.radius,
            nearest_distance=s.nearest_distance,
            contained=s.contained,
            within_bound=s.within_bound,
        )
        for s in report.spikes
    ]


def bregman_to_doc(report: BregmanReport) -> BregmanDoc:
    return BregmanDoc(
        d_value=report.d_value,
        bound_2lambda=report.bound_2lambda,
        weak_wasserstein_sum=report.weak_wasserstein_sum,
        within_bound=report.within_bound,
    )


def corollary_to_doc(report: CorollaryReport) -> CorollaryDoc:
    return CorollaryDoc(
        case=str(report.case),
        constants=constants_to_doc(report.constants),
        lambda_threshold=report.lambda_threshold,
        failure_probability=report.failure_probability,
        failure_formula=report.failure_formula,
        detection_threshold=report.detection_threshold,
        output_threshold=report.output_threshold,
        max_radius=report.max_radius,
        guaranteed_max_radius=report.guaranteed_max_radius,
        radius_coefficient=report.radius_coefficient,
        radius_consistency=report.radius_consistency,
    )


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class GuaranteesFile(_msgspec.Struct, kw_only=True):
    """Per-trial guarantee checks; ``None`` marks a trial that failed before them."""

    format: str = GUARANTEES_FORMAT
    trials: list[GuaranteesDoc | None] = []


class CalibrationRowDoc(_msgspec.Struct):
    u: float
    analytic_bound: float
    regime_valid: bool
    mc_exceedance: float
    mc_low: float
    mc_high: float
    trials: int


class TrialRecord(_msgspec.Struct, kw_only=True):
    """Outcome of one seeded trial; ``error`` is set when a stage failed."""

    trial: int
    noise_l2: float
    lambda0_lower: float
    lambda0_upper: float
    lam: float | None = None
    lam_effective: float | None = None
    objective: float | None = None
    gap: float | None = None
    support_size: int | None = None
    optimality_passed: bool | None = None
    cond1_value: float | None = None
    cond2_residual: float | None = None
    prediction_slack: float | None = None
    estimate: MeasureDoc | None = None
    localization_conditioned: bool = False
    localization_violations: int = 0
    detection_conditioned: bool = False
    detection_violations: int = 0
    bregman_ok: bool | None = None
    error: str | None = None


class Aggregate(_msgspec.Struct, kw_only=True):
    trials: int
    failed: int
    optimality_passed: int
    localization_conditioned: int
    localization_violating_trials: int
    localization_pass_rate: float | None
    detection_conditioned: int
    detection_violating_trials: int
    detection_pass_rate: float | None
    bregman_violating_trials: int
    prediction_violating_trials: int


class RunRecord(_msgspec.Struct, kw_only=True):
    format: str = RUN_FORMAT
    config: dict[str, Any]
    truth: MeasureDoc | None = None
    trials: list[TrialRecord] = []
    aggregate: Aggregate
    dual_trial0: PolynomialDoc | None = None
    corollary: CorollaryDoc | None = None
    corollary_note: str | None = None
    calibration: list[CalibrationRowDoc] | None = None
    artifacts: dict[str, str] = {}


def calibration_to_doc(rows: list[CalibrationRow]) -> list[CalibrationRowDoc]:
    return [
        CalibrationRowDoc(
            u=r.u,
            analytic_bound=r.analytic_bound,
            regime_valid=r.regime_valid,
            mc_exceedance=r.mc_exceedance,
            mc_low=r.mc_low,
            mc_high=r.mc_high,
            trials=r.trials,
        )
        for r in rows
    ]


# ---------------------------------------------------------------------------
# Encode / decode helpers (JSON)
# ---------------------------------------------------------------------------

_encoder = _msgspec.json.Encoder()
_measure_decoder = _msgspec.json.Decoder(MeasureDoc)
_samples_decoder = _msgspec.json.Decoder(SamplesDoc)
_result_decoder = _msgspec.json.Decoder(ResultDoc)
_certificate_decoder = _msgspec.json.Decoder(CertificateDoc)
_run_decoder = _msgspec.json.Decoder(RunRecord)
_guarantees_decoder = _msgspec.json.Decoder(GuaranteesFile)


def encode(doc: object) -> bytes:
    """Indented JSON with a trailing newline."""
    return _msgspec.json.format(_encoder.encode(doc), indent=2) + b"\n"


def _decode(decoder: _msgspec.json.Decoder[Any], data: bytes, what: str) -> Any:
    try:
        return decoder.decode(data)
    except (_msgspec.ValidationError, _msgspec.DecodeError) as e:
        raise ConfigError(f"invalid {what} document: {e}") from e


def encode_measure(mu: DiscreteMeasure) -> bytes:
    return encode(measure_to_doc(mu))


def decode_measure(data: bytes) -> DiscreteMeasure:
    doc: MeasureDoc = _decode(_measure_decoder, data, "measure")
    return measure_from_doc(doc)


def encode_samples(y: SampleVector, sigma: float | None = None) -> bytes:
    return encode(samples_to_doc(y, sigma))


def decode_samples(data: bytes) -> tuple[SampleVector, float | None]:
    doc: SamplesDoc = _decode(_samples_decoder, data, "samples")
    return samples_from_doc(doc)


def encode_result(result: SolveResult) -> bytes:
    return encode(result_to_doc(result))


def decode_result(data: bytes) -> ResultDoc:
    result: ResultDoc = _decode(_result_decoder, data, "result")
    return result


def encode_certificate(report: CertificateReport) -> bytes:
    return encode(certificate_to_doc(report))


def decode_certificate(data: bytes) -> CertificateDoc:
    result: CertificateDoc = _decode(_certificate_decoder, data, "certificate")
    return result


def encode_run(record: RunRecord) -> bytes:
    return encode(record)


def decode_run(data: bytes) -> RunRecord:
    result: RunRecord = _decode(_run_decoder, data, "run record")
    return result


def decode_guarantees(data: bytes) -> GuaranteesFile:
    result: GuaranteesFile = _decode(_guarantees_decoder, data, "guarantees")
    return result
