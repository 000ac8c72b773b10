"""Unit tests for the certificates module."""

from __future__ import annotations

import math

import numpy as np
import pytest

from spikesolve.certificates import (
    FOURIER_QIC,
    QicConstants,
    build_interpolation_qj,
    certificate_for,
    construct_fourier_certificate,
    squared_fejer_coefficients,
    verify_bip,
    verify_interpolation_qj,
    verify_qic,
)
from spikesolve.errors import DomainError, PreconditionError
from spikesolve.families import (
    GeneralizedPolynomial,
    MeasurementFamily,
    bernstein_constant,
    chebyshev_region_rmin,
    sup_norm_certified,
)
from spikesolve.measure import CIRCLE, Atom, DiscreteMeasure, min_separation

SUPPORT = np.array([0.1, 0.35, 0.7])
PHASES = np.array([0.3, 2.0, 4.5])


def _separated_support(rng: np.random.Generator, f_c: int, count: int) -> np.ndarray:
    while True:
        pts = np.sort(rng.uniform(0.0, 1.0, size=count))
        if min_separation(pts, CIRCLE) >= 2.5 / f_c:
            return pts


def test_qic_constants() -> None:
    assert FOURIER_QIC.c0 == pytest.approx(math.sqrt(0.0092 / 0.0838))
    with pytest.raises(DomainError):
        QicConstants(c_a=0.1, c_b=1.5)
    with pytest.raises(DomainError):
        QicConstants(c_a=0.0, c_b=0.1)


@pytest.mark.parametrize("f_c", [2, 15, 128])
def test_squared_fejer_coefficients(f_c: int) -> None:
    kc = squared_fejer_coefficients(f_c)
    assert kc.shape == (2 * f_c + 1,)
    assert kc.sum() == pytest.approx(1.0)
    assert np.all(kc >= 0)
    np.testing.assert_allclose(kc, kc[::-1])


def test_certificate_interpolates_phases() -> None:
    P = construct_fourier_certificate(SUPPORT, PHASES, 128)
    np.testing.assert_allclose(P(SUPPORT), np.exp(-1j * PHASES), atol=1e-8)
    # |P| is stationary at every spike
    radial = (np.exp(1j * PHASES) * P.d1(SUPPORT)).real
    assert np.max(np.abs(radial)) / (2 * math.pi * 128) <= 1e-8
    _, upper = sup_norm_certified(P, 64 * 257)
    assert upper <= 1.0 + 1e-6


def test_certificate_regime_gates() -> None:
    with pytest.raises(PreconditionError, match="f_c >= 128"):
        construct_fourier_certificate(SUPPORT, PHASES, 64)
    with pytest.raises(PreconditionError, match="separation"):
        construct_fourier_certificate([0.1, 0.11], [0.0, 0.0], 128)
    with pytest.raises(DomainError):
        construct_fourier_certificate([], [], 128)
    with pytest.raises(DomainError):
        construct_fourier_certificate([0.1], [0.0, 1.0], 128)


def test_certificate_below_regime_when_allowed() -> None:
    P = construct_fourier_certificate(SUPPORT, PHASES, 16, enforce_regime=False)
    np.testing.assert_allclose(P(SUPPORT), np.exp(-1j * PHASES), atol=1e-8)


def test_certificate_for_measure() -> None:
    mu = DiscreteMeasure(CIRCLE, tuple(Atom(t, 1.0, th) for t, th in zip(SUPPORT, PHASES)))
    P = certificate_for(mu, 128)
    np.testing.assert_allclose(P(mu.locations), np.exp(-1j * mu.phases), atol=1e-8)


def test_verify_qic_single_spike() -> None:
    P = construct_fourier_certificate([0.42], [1.0], 128)
    report = verify_qic(P, [0.42], [1.0], FOURIER_QIC)
    assert report.passed
    assert report.near_margin >= 0
    assert report.far_margin >= 0
    m = 256
    near_slack = FOURIER_QIC.c_a * m**2 * (FOURIER_QIC.c0 / m) ** 2 * report.near_margin
    assert report.qic_margin == pytest.approx(min(report.far_margin, near_slack))
    assert report.qic_margin > 0


def test_verify_qic_three_spikes() -> None:
    P = construct_fourier_certificate(SUPPORT, PHASES, 128)
    report = verify_qic(P, SUPPORT, PHASES, FOURIER_QIC)
    assert report.passed
    assert report.phase_residual <= 1e-8


@pytest.mark.parametrize(("t", "theta"), [(0.3, 1.2), (0.875, 4.0), (0.999, 0.0)])
def test_single_spike_certificate_is_a_rotated_translate(t: float, theta: float) -> None:
    base = construct_fourier_certificate([0.0], [0.0], 128)
    moved = construct_fourier_certificate([t], [theta], 128)
    x = np.linspace(0.0, 1.0, 2048, endpoint=False)
    np.testing.assert_allclose(
        moved((x + t) % 1.0), np.exp(-1j * theta) * base(x), atol=1e-10
    )


@pytest.mark.parametrize(
    ("c_a", "c_b"),
    [
        (0.0838, 0.0092),
        (0.0838, 0.005),
        (0.0419, 0.0046),
        (0.07, 0.006),
        (0.02, 0.001),
    ],
)
def test_verify_qic_passes_for_weaker_constants(c_a: float, c_b: float) -> None:
    P = construct_fourier_certificate(SUPPORT, PHASES, 128)
    report = verify_qic(P, SUPPORT, PHASES, QicConstants(c_a=c_a, c_b=c_b))
    assert report.passed
    assert report.qic_margin >= 0


def test_verify_qic_reports_wrong_phases() -> None:
    P = construct_fourier_certificate(SUPPORT, PHASES, 128)
    report = verify_qic(P, SUPPORT, PHASES + 0.5, FOURIER_QIC)
    assert not report.passed
    assert report.phase_residual > 0.1


def test_verify_qic_reports_flat_polynomial() -> None:
    fam = MeasurementFamily.fourier(128)
    coeffs = np.zeros(fam.size, dtype=np.complex128)
    coeffs[128] = 1.0
    one = GeneralizedPolynomial(fam, coeffs)
    report = verify_qic(one, [0.3], [0.0], FOURIER_QIC)
    assert report.phase_residual == pytest.approx(0.0, abs=1e-12)
    assert report.far_margin < 0
    assert report.qic_margin < 0
    assert not report.passed


def test_verify_qic_rejects_coarse_grid() -> None:
    P = construct_fourier_certificate([0.42], [1.0], 128)
    with pytest.raises(DomainError, match="too coarse"):
        verify_qic(P, [0.42], [1.0], FOURIER_QIC, grid_size=512)


def test_verify_bip_fourier_holds_with_bernstein_constant() -> None:
    fam = MeasurementFamily.fourier(16)
    report = verify_bip(fam, [0.2, 0.6], FOURIER_QIC.c0, math.pi**2, trials=20, seed=3)
    assert report.passed
    assert 0 < report.worst_ratio <= 1


def test_verify_bip_reports_small_constant() -> None:
    fam = MeasurementFamily.fourier(16)
    report = verify_bip(fam, [0.2, 0.6], FOURIER_QIC.c0, 0.01, trials=5)
    assert not report.passed


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_verify_bip_chebyshev_random_sweep(seed: int) -> None:
    fam = MeasurementFamily.chebyshev(16)
    support = [-0.5, 0.1, 0.6]
    c0 = 0.3
    c_c = bernstein_constant("chebyshev", r_min=chebyshev_region_rmin(support, c0 / 16))
    report = verify_bip(fam, support, c0, c_c, trials=20, seed=seed)
    assert report.passed
    assert 0.0 < report.worst_ratio <= 1.0


def test_verify_bip_chebyshev_edge_gate() -> None:
    with pytest.raises(PreconditionError, match="edges"):
        verify_bip(MeasurementFamily.chebyshev(16), [0.99], 0.5, 16.0, trials=1)


def test_interpolation_qj() -> None:
    fam = MeasurementFamily.fourier(128)
    Q = build_interpolation_qj(SUPPORT, 1, fam)
    np.testing.assert_allclose(Q(SUPPORT), [0.0, 1.0, 0.0], atol=1e-8)
    report = verify_interpolation_qj(Q, SUPPORT, 1, FOURIER_QIC, math.pi**2)
    assert report.interpolation_residual <= 1e-8
    assert report.derivative_residual <= 1e-8
    assert report.near_own_ratio <= 1.0
    assert report.near_other_ratio <= 1.0
    assert report.passed


def test_interpolation_qj_validates() -> None:
    with pytest.raises(DomainError):
        build_interpolation_qj(SUPPORT, 3, MeasurementFamily.fourier(128))
    with pytest.raises(DomainError, match="Fourier"):
        build_interpolation_qj([0.0], 0, MeasurementFamily.chebyshev(16))


@pytest.mark.slow
@pytest.mark.parametrize("f_c", [128, 256])
def test_random_separated_supports_enjoy_qic(f_c: int) -> None:
    rng = np.random.default_rng(f_c)
    for _ in range(10):
        count = int(rng.integers(2, 12))
        support = _separated_support(rng, f_c, count)
        phases = rng.uniform(0.0, 2 * math.pi, size=count)
        P = construct_fourier_certificate(support, phases, f_c)
        report = verify_qic(P, support, phases, FOURIER_QIC)
        assert report.passed, report
        assert report.near_margin >= 0
        assert report.far_margin >= 0
