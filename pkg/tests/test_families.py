"""Unit tests for the families module."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import eval_chebyt

from spikesolve.errors import DomainError
from spikesolve.families import (
    BernsteinFamily,
    GeneralizedPolynomial,
    MeasurementFamily,
    SampleVector,
    bernstein_constant,
    chebyshev_bip_constant,
    chebyshev_region_rmin,
    evaluate,
    evaluate_d1,
    evaluate_d2,
    evaluate_grid,
    evaluate_grid_d1,
    forward,
    gram_matrix,
    scan_grid,
    sup_norm_certified,
)
from spikesolve.measure import CIRCLE, INTERVAL, Atom, DiscreteMeasure


def _random_polynomial(fam: MeasurementFamily, seed: int) -> GeneralizedPolynomial:
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal(fam.size) + 1j * rng.standard_normal(fam.size)
    return GeneralizedPolynomial(fam, coeffs)


@pytest.mark.parametrize(
    "fam",
    [
        MeasurementFamily.fourier(1),
        MeasurementFamily.fourier(16),
        MeasurementFamily.fourier(128),
        MeasurementFamily.chebyshev(1),
        MeasurementFamily.chebyshev(16),
        MeasurementFamily.chebyshev(64),
    ],
    ids=lambda f: f.describe(),
)
def test_gram_matrix_is_identity(fam: MeasurementFamily) -> None:
    gram = gram_matrix(fam)
    assert np.max(np.abs(gram - np.eye(fam.size))) <= 1e-10


def test_family_sizes_and_domains() -> None:
    fourier = MeasurementFamily.fourier(8)
    cheb = MeasurementFamily.chebyshev(8)
    assert (fourier.size, fourier.effective_m, fourier.domain) == (17, 16, CIRCLE)
    assert (cheb.size, cheb.effective_m, cheb.domain) == (9, 8, INTERVAL)
    with pytest.raises(DomainError):
        MeasurementFamily.fourier(0)


def test_chebyshev_basis_matches_scipy(chebyshev16: MeasurementFamily) -> None:
    x = np.linspace(-1.0, 1.0, 41)
    basis = chebyshev16.basis(x).real
    np.testing.assert_allclose(basis[:, 0], 1.0)
    for k in range(1, 17):
        np.testing.assert_allclose(basis[:, k], math.sqrt(2.0) * eval_chebyt(k, x), atol=1e-12)


def test_chebyshev_rejects_points_outside_interval(chebyshev16: MeasurementFamily) -> None:
    with pytest.raises(DomainError):
        chebyshev16.basis([1.5])


def test_evaluate_uses_conjugated_coefficients(fourier16: MeasurementFamily) -> None:
    coeffs = np.zeros(fourier16.size, dtype=np.complex128)
    coeffs[16 + 3] = 2j  # index k = 3
    P = GeneralizedPolynomial(fourier16, coeffs)
    x = 0.123
    assert evaluate(P, x) == pytest.approx(-2j * np.exp(2j * math.pi * 3 * x))


def test_evaluate_scalar_and_array(fourier16: MeasurementFamily) -> None:
    P = _random_polynomial(fourier16, 0)
    values = evaluate(P, [0.1, 0.2])
    assert isinstance(evaluate(P, 0.1), complex)
    assert values.shape == (2,)
    assert values[0] == pytest.approx(evaluate(P, 0.1))


@pytest.mark.parametrize("fam", [MeasurementFamily.fourier(16), MeasurementFamily.chebyshev(16)])
def test_derivatives_match_finite_differences(fam: MeasurementFamily) -> None:
    rng = np.random.default_rng(7)
    h = 1e-6
    lo, hi = (0.0, 1.0) if fam.is_fourier else (-0.9, 0.9)
    for seed in range(100):
        P = _random_polynomial(fam, seed)
        x = rng.uniform(lo, hi, size=4)
        fd1 = (evaluate(P, x + h) - evaluate(P, x - h)) / (2 * h)
        fd2 = (evaluate_d1(P, x + h) - evaluate_d1(P, x - h)) / (2 * h)
        d1, d2 = evaluate_d1(P, x), evaluate_d2(P, x)
        np.testing.assert_allclose(fd1, d1, rtol=1e-5, atol=1e-5 * np.abs(d1).max())
        np.testing.assert_allclose(fd2, d2, rtol=1e-5, atol=1e-5 * np.abs(d2).max())


@pytest.mark.parametrize("fam", [MeasurementFamily.fourier(16), MeasurementFamily.chebyshev(16)])
def test_evaluate_grid_matches_pointwise(fam: MeasurementFamily) -> None:
    P = _random_polynomial(fam, 3)
    t, values = evaluate_grid(P, 200)
    np.testing.assert_allclose(t, scan_grid(fam, 200))
    np.testing.assert_allclose(values, evaluate(P, t), atol=1e-10)


def test_evaluate_grid_d1_fourier(fourier16: MeasurementFamily) -> None:
    P = _random_polynomial(fourier16, 4)
    t, values = evaluate_grid_d1(P, 128)
    np.testing.assert_allclose(values, evaluate_d1(P, t), atol=1e-8)


def test_evaluate_grid_d1_chebyshev_is_angle_derivative(chebyshev16: MeasurementFamily) -> None:
    P = _random_polynomial(chebyshev16, 5)
    t, values = evaluate_grid_d1(P, 100)
    interior = slice(1, -1)
    # dP/dtheta = -sin(theta) dP/dx
    expected = -np.sqrt(1.0 - t[interior] ** 2) * evaluate_d1(P, t[interior])
    np.testing.assert_allclose(values[interior], expected, atol=1e-8)


def test_evaluate_grid_too_coarse(fourier16: MeasurementFamily) -> None:
    with pytest.raises(DomainError):
        evaluate_grid(GeneralizedPolynomial.zero(fourier16), 10)


@pytest.mark.parametrize("fam", [MeasurementFamily.fourier(16), MeasurementFamily.chebyshev(16)])
def test_sup_norm_bracket_contains_dense_maximum(fam: MeasurementFamily) -> None:
    P = _random_polynomial(fam, 11)
    lower, upper = sup_norm_certified(P, 8 * fam.size)
    _, dense = evaluate_grid(P, 2**16)
    true_max = float(np.abs(dense).max())
    assert lower <= true_max * (1 + 1e-12)
    assert true_max <= upper * (1 + 1e-12)


def test_sup_norm_rejects_coarse_grid(fourier16: MeasurementFamily) -> None:
    with pytest.raises(DomainError, match="too coarse"):
        sup_norm_certified(GeneralizedPolynomial.zero(fourier16), fourier16.size)


def test_sup_norm_of_zero(fourier16: MeasurementFamily) -> None:
    assert sup_norm_certified(GeneralizedPolynomial.zero(fourier16), 256) == (0.0, 0.0)


def test_forward_is_linear_and_matches_basis(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure
) -> None:
    y = forward(three_spikes, fourier16)
    expected = fourier16.basis(three_spikes.locations).T @ three_spikes.weights
    np.testing.assert_allclose(y.values, expected)
    doubled = forward(three_spikes.scaled(2.0), fourier16)
    np.testing.assert_allclose(doubled.values, 2 * y.values)


def test_forward_of_zero_measure(fourier16: MeasurementFamily) -> None:
    assert forward(DiscreteMeasure.zero(CIRCLE), fourier16).norm() == 0.0


def test_forward_domain_mismatch(chebyshev16: MeasurementFamily) -> None:
    mu = DiscreteMeasure(CIRCLE, (Atom(0.2, 1.0, 0.0),))
    with pytest.raises(DomainError):
        forward(mu, chebyshev16)


def test_sample_vector_family_mismatch(fourier16: MeasurementFamily) -> None:
    other = MeasurementFamily.fourier(8)
    with pytest.raises(DomainError, match="mismatch"):
        SampleVector.zero(fourier16) + SampleVector.zero(other)
    with pytest.raises(DomainError):
        SampleVector(fourier16, np.zeros(3))


def test_sample_pairing_polynomial(
    fourier16: MeasurementFamily, clean_fourier: SampleVector, three_spikes: DiscreteMeasure
) -> None:
    # <c(mu), Phi>(x) = sum_j conj(w_j) D(x - T_j), D the Dirichlet kernel
    P = clean_fourier.as_polynomial()
    t = three_spikes.locations[0]
    k = np.arange(-16, 17)
    kernel = np.array([np.sum(np.exp(2j * math.pi * k * (t - s))) for s in three_spikes.locations])
    expected = np.sum(np.conj(three_spikes.weights) * kernel)
    assert evaluate(P, t) == pytest.approx(expected)


def test_bernstein_constants() -> None:
    assert bernstein_constant("fourier") == pytest.approx(math.pi**2)
    assert bernstein_constant(BernsteinFamily.CHEBYSHEV, r_min=0.5) == pytest.approx(16.0)
    assert bernstein_constant("laplace", rates=[1.0, 2.0]) == pytest.approx(729.0)
    assert bernstein_constant("muntz-i", c_eta=2.0, eta=0.1, x=0.5) == pytest.approx(8.0)
    assert bernstein_constant("muntz-ii", exponents=[2.0, 3.0], x=1.0) == pytest.approx(81 * 30)


def test_bernstein_laplace_geometric_rates() -> None:
    rates = [2.0**-i for i in range(10)]
    expected = (9.0 * (2.0 - 2.0**-9)) ** 2
    assert bernstein_constant("laplace", rates=rates) == pytest.approx(expected)
    assert expected < 324.0
    assert bernstein_constant("laplace", rates=rates[::-1]) == pytest.approx(expected)


@pytest.mark.parametrize(
    ("kind", "kwargs"),
    [
        ("chebyshev", {"r_min": 0.0}),
        ("laplace", {"rates": [1.0, 1.0]}),
        ("laplace", {"rates": [1.0, 0.0]}),
        ("muntz-i", {"c_eta": 1.0, "eta": 0.5, "x": 0.6}),
        ("muntz-ii", {"exponents": [0.5], "x": 0.5}),
        ("hermite", {}),
    ],
)
def test_bernstein_constant_domain_errors(kind: str, kwargs: dict[str, object]) -> None:
    with pytest.raises(DomainError):
        bernstein_constant(kind, **kwargs)  # type: ignore[arg-type]


def test_chebyshev_helpers() -> None:
    assert chebyshev_bip_constant(0.5) == pytest.approx(16.0 / 3.0)
    assert chebyshev_region_rmin([0.0, 0.3], 0.3) == pytest.approx(0.8)
    with pytest.raises(DomainError):
        chebyshev_region_rmin([0.9], 0.2)
