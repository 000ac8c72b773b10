"""Unit tests for the localization and detection guarantees."""

from __future__ import annotations

import math

import numpy as np
import pytest

from spikesolve.certificates import FOURIER_QIC, QicConstants, construct_fourier_certificate
from spikesolve.errors import DomainError, PreconditionError
from spikesolve.guarantees import (
    FOURIER_DETECTION,
    GuaranteeConstants,
    bregman_diagnostic,
    c_prime_for,
    fourier_constants,
    fourier_guarantees,
    input_detection,
    moment_constants,
    moment_guarantees,
    output_localization,
)
from spikesolve.measure import CIRCLE, Atom, DiscreteMeasure
from spikesolve.noise import lambda_fourier, lambda_moment

TRUTH = DiscreteMeasure(CIRCLE, (Atom(0.5, 1000.0, 0.0),))


def _estimate(*atoms: tuple[float, float]) -> DiscreteMeasure:
    return DiscreteMeasure(CIRCLE, tuple(Atom(t, a, 0.0) for t, a in atoms))


def test_fourier_c_prime() -> None:
    c_prime = c_prime_for(FOURIER_QIC, math.pi**2)
    assert c_prime == pytest.approx(2.0 + 2.0 * (1.0 - 0.0092) / 0.0092)
    assert c_prime < FOURIER_DETECTION
    assert FOURIER_DETECTION - c_prime < 1.0


def test_detection_threshold_at_fc64() -> None:
    lam = lambda_fourier(64, 1.0)
    assert lam == pytest.approx(79.9, abs=0.05)
    consts = fourier_constants(64, lam)
    assert consts.effective_m == 128
    assert consts.detection_threshold == pytest.approx(17370, rel=1e-3)


def test_constants_validate_c_prime() -> None:
    with pytest.raises(DomainError, match="does not match"):
        GuaranteeConstants(FOURIER_QIC, math.pi**2, 200.0, 32, 1.0)
    with pytest.raises(DomainError):
        fourier_constants(0, 1.0)
    consts = fourier_constants(16, 1.0)
    assert consts.with_lambda(2.0).detection_threshold == pytest.approx(
        2.0 * consts.detection_threshold
    )


def test_fourier_corollary() -> None:
    lam = lambda_fourier(128, 1.0)
    assert lam == pytest.approx(122.088, abs=1e-3)
    report = fourier_guarantees(128, 1.0, lam)
    assert report.failure_probability == pytest.approx(1.0 / 64.0)
    assert 217.0 <= report.output_threshold / lam <= 218.0
    assert 217.0 <= report.constants.c_prime <= 218.0
    assert report.detection_threshold == pytest.approx(FOURIER_DETECTION * lam)
    assert report.max_radius == pytest.approx(0.1649 / 128)
    assert report.guaranteed_max_radius == pytest.approx(FOURIER_QIC.c0 / 256)
    assert report.radius_consistency is not None


def test_fourier_corollary_gates() -> None:
    with pytest.raises(PreconditionError, match="f_c >= 128"):
        fourier_guarantees(64, 1.0, 1000.0)
    with pytest.raises(PreconditionError, match="below"):
        fourier_guarantees(128, 1.0, 100.0)


def test_moment_constants_use_second_branch() -> None:
    qic = QicConstants(c_a=0.05, c_b=0.01)
    consts = moment_constants(40, qic, 1.0)
    assert consts.c_c == pytest.approx(4.0 / (1.0 - 0.2))
    assert consts.c_c / qic.c_a == pytest.approx(4.0 / (qic.c_a - qic.c_b))
    assert consts.c_prime == pytest.approx(200.0)
    with pytest.raises(DomainError):
        moment_constants(40, QicConstants(c_a=0.01, c_b=0.05), 1.0)


def test_moment_corollary() -> None:
    qic = QicConstants(c_a=0.05, c_b=0.01)
    lam = lambda_moment(100, 1.0)
    report = moment_guarantees(100, 1.0, lam, qic)
    assert report.failure_probability == pytest.approx(0.16775, abs=1e-4)
    assert report.max_radius == pytest.approx(qic.c0 / 100)
    with pytest.raises(DomainError):
        moment_guarantees(5, 1.0, 10.0, qic)
    with pytest.raises(PreconditionError, match="endpoints"):
        moment_guarantees(100, 1.0, lam, qic, support=np.array([0.0, 0.95]))


def test_output_localization_contained() -> None:
    consts = fourier_constants(16, 1.0)
    estimate = _estimate((0.501, 990.0), (0.9, 1.0))
    bound = output_localization(estimate, TRUTH, consts)
    heavy, light = bound.spikes
    assert heavy.threshold_passed
    assert heavy.radius == pytest.approx(math.sqrt(2.0 / (0.0838 * 990.0)) / 32)
    assert heavy.contained is True
    assert not light.threshold_passed
    assert light.radius is None
    assert bound.near_mass_moment == pytest.approx(990.0 * 1e-6)
    assert bound.far_mass == pytest.approx(1.0)
    assert bound.uniqueness_guaranteed is True
    assert bound.passed


def test_output_localization_violation() -> None:
    consts = fourier_constants(16, 1.0)
    bound = output_localization(_estimate((0.52, 990.0)), TRUTH, consts)
    assert bound.spikes[0].contained is False
    assert bound.far_mass == pytest.approx(990.0)
    assert bound.violations == 2
    assert not bound.passed


def test_output_localization_without_truth() -> None:
    bound = output_localization(_estimate((0.3, 500.0)), None, fourier_constants(16, 1.0))
    assert bound.near_mass_moment is None
    assert bound.far_mass is None
    assert bound.uniqueness_guaranteed is None
    assert bound.spikes[0].contained is None
    assert bound.passed


def test_input_detection() -> None:
    consts = fourier_constants(16, 1.0)
    report = input_detection(TRUTH, _estimate((0.501, 990.0)), consts)
    (spike,) = report.spikes
    assert spike.clustered_mass == pytest.approx(990.0)
    assert spike.discrepancy == pytest.approx(10.0)
    assert spike.within_bound
    assert spike.threshold_passed
    assert spike.contained is True
    assert report.passed


def test_input_detection_missed_spike() -> None:
    report = input_detection(TRUTH, DiscreteMeasure.zero(CIRCLE), fourier_constants(16, 1.0))
    (spike,) = report.spikes
    assert spike.clustered_mass == 0.0
    assert spike.nearest_distance is None
    assert not spike.within_bound
    assert spike.contained is False
    assert report.violations == 1


def test_bregman_diagnostic() -> None:
    truth = DiscreteMeasure(CIRCLE, (Atom(0.3, 5.0, 1.0),))
    P = construct_fourier_certificate(truth.locations, truth.phases, 128)
    consts = fourier_constants(128, 1.0)
    exact = bregman_diagnostic(P, truth, truth, consts, 1.0)
    assert exact.d_value == pytest.approx(0.0, abs=1e-8)
    assert exact.within_bound
    assert exact.nonnegative
    off = DiscreteMeasure(CIRCLE, (Atom(0.31, 2.0, 1.0), Atom(0.8, 0.5, 2.0)))
    report = bregman_diagnostic(P, truth, off, consts, 1.0)
    assert report.d_value >= report.weak_wasserstein_sum - 1e-9
    assert report.weak_wasserstein_sum > 0


def test_bregman_requires_interpolation() -> None:
    truth = DiscreteMeasure(CIRCLE, (Atom(0.3, 5.0, 1.0),))
    P = construct_fourier_certificate([0.3], [2.0], 128)
    consts = fourier_constants(128, 1.0)
    with pytest.raises(PreconditionError, match="interpolate"):
        bregman_diagnostic(P, truth, truth, consts, 1.0)
    with pytest.raises(DomainError):
        bregman_diagnostic(P, DiscreteMeasure.zero(CIRCLE), truth, consts, 1.0)
