"""Unit tests for the BLASSO solver."""

from __future__ import annotations

import numpy as np
import pytest

from spikesolve.certificates import construct_fourier_certificate
from spikesolve.errors import DomainError
from spikesolve.families import GeneralizedPolynomial, MeasurementFamily, SampleVector, forward
from spikesolve.measure import CIRCLE, Atom, DiscreteMeasure, nearest_in_set, tv_norm
from spikesolve.noise import NoiseModel, sample_noise
from spikesolve.settings import SolverSettings
from spikesolve.solver import (
    SolverConfig,
    blasso_objective,
    check_optimality,
    extract_support,
    fit_amplitudes,
    grid_lasso_oracle,
    lambda_path,
    prediction_bound_check,
    refit_unpenalized,
    residual_polynomial,
    solve,
    solve_gme,
)


def _config(
    fam: MeasurementFamily, y: SampleVector, ratio: float = 1e-3, **kw: object
) -> SolverConfig:
    settings = SolverSettings(**kw)  # type: ignore[arg-type]
    return SolverConfig.for_family(fam, ratio * y.norm(), settings)


def test_config_validation(fourier16: MeasurementFamily) -> None:
    with pytest.raises(DomainError):
        SolverConfig(lam=0.0, dual_grid=1000, certify_grid=1000)
    with pytest.raises(DomainError):
        SolverConfig(lam=float("nan"), dual_grid=1000, certify_grid=1000)
    with pytest.raises(DomainError):
        SolverConfig(lam=1.0, dual_grid=1000, certify_grid=1000, delta_sup=1.0)
    with pytest.raises(DomainError, match="dual grid"):
        SolverConfig(lam=1.0, dual_grid=10, certify_grid=10_000).check_family(fourier16)


def test_config_from_settings(fourier16: MeasurementFamily) -> None:
    cfg = SolverConfig.for_family(fourier16, 2.0, SolverSettings(dual_grid_factor=16, debias=True))
    assert cfg.lam == 2.0
    assert cfg.dual_grid == 16 * 33
    assert cfg.certify_grid == 1024 * 33
    assert cfg.debias


def test_objective_and_residual(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure, clean_fourier: SampleVector
) -> None:
    assert blasso_objective(fourier16, three_spikes, clean_fourier, 0.5) == pytest.approx(
        0.5 * tv_norm(three_spikes)
    )
    zero = DiscreteMeasure.zero(CIRCLE)
    assert blasso_objective(fourier16, zero, clean_fourier, 0.5) == pytest.approx(
        0.5 * clean_fourier.norm() ** 2
    )
    eta = residual_polynomial(fourier16, zero, clean_fourier, 2.0)
    np.testing.assert_allclose(eta.coefficients, clean_fourier.values / 2.0)


def test_samples_must_match_family(
    fourier16: MeasurementFamily, chebyshev16: MeasurementFamily, clean_fourier: SampleVector
) -> None:
    with pytest.raises(DomainError, match="samples belong"):
        solve(chebyshev16, clean_fourier, SolverConfig.for_family(chebyshev16, 1.0))


def test_single_spike_location_is_exact(fourier16: MeasurementFamily) -> None:
    truth = DiscreteMeasure(CIRCLE, (Atom(0.37, 1.0, 0.8),))
    y = forward(truth, fourier16)
    result = solve(fourier16, y, _config(fourier16, y))
    assert len(result.measure) == 1
    atom = result.measure.atoms[0]
    assert atom.location == pytest.approx(0.37, abs=1e-5)
    assert atom.phase == pytest.approx(0.8, abs=1e-4)
    assert 0.9 < atom.amplitude < 1.0
    assert result.optimality.passed
    assert result.cardinality_ok
    assert result.debiased is None


def test_single_spike_debias_restores_amplitude(fourier16: MeasurementFamily) -> None:
    truth = DiscreteMeasure(CIRCLE, (Atom(0.37, 1.0, 0.8),))
    y = forward(truth, fourier16)
    result = solve(fourier16, y, _config(fourier16, y, debias=True))
    assert result.debiased is not None
    assert result.debiased.amplitudes[0] == pytest.approx(1.0, rel=1e-5)


def test_three_separated_spikes(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure, clean_fourier: SampleVector
) -> None:
    result = solve(fourier16, clean_fourier, _config(fourier16, clean_fourier))
    assert result.optimality.passed
    assert result.optimality.cond1_value <= result.lam * (1 + 1e-5)
    assert result.gap >= 0
    _, dist = nearest_in_set(three_spikes.locations, result.measure.locations, CIRCLE)
    assert np.max(dist) < 1e-2
    # the scaled dual certificate is feasible up to the reported slack
    assert result.lam_effective <= result.lam
    assert result.feasibility_slack >= 0


def test_chebyshev_spikes(chebyshev16: MeasurementFamily, interval_spikes: DiscreteMeasure) -> None:
    y = forward(interval_spikes, chebyshev16)
    result = solve(chebyshev16, y, _config(chebyshev16, y))
    assert result.optimality.passed
    _, dist = nearest_in_set(
        interval_spikes.locations, result.measure.locations, chebyshev16.domain
    )
    assert np.max(dist) < 2e-2


def test_zero_samples_give_zero_measure(fourier16: MeasurementFamily) -> None:
    y = SampleVector.zero(fourier16)
    result = solve(fourier16, y, SolverConfig.for_family(fourier16, 1.0))
    assert len(result.measure) == 0
    assert result.objective == 0.0
    assert result.optimality.passed


def test_extract_support_reads_certificate_peaks() -> None:
    fam = MeasurementFamily.fourier(128)
    support = [0.1, 0.35, 0.7]
    P = construct_fourier_certificate(support, [0.3, 2.0, 4.5], 128)
    cfg = SolverConfig.for_family(fam, 1.0)
    found = extract_support(P, cfg)
    assert len(found) == 3
    assert sorted(found) == pytest.approx(support, abs=1e-5)
    assert extract_support(P.scaled(0.9), cfg) == []
    assert extract_support(GeneralizedPolynomial.zero(fam), cfg) == []


def test_fit_amplitudes(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure, clean_fourier: SampleVector
) -> None:
    empty = fit_amplitudes(fourier16, [], clean_fourier, 1.0)
    assert len(empty.measure) == 0
    fit = fit_amplitudes(fourier16, three_spikes.locations, clean_fourier, 1e-6)
    assert fit.converged
    assert not fit.ill_conditioned
    np.testing.assert_allclose(fit.measure.amplitudes, three_spikes.amplitudes, rtol=1e-4)
    with pytest.raises(DomainError, match="distinct"):
        fit_amplitudes(fourier16, [0.2, 1.2], clean_fourier, 1.0)


def test_refit_unpenalized_recovers_truth(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure, clean_fourier: SampleVector
) -> None:
    shrunk = three_spikes.scaled(0.5)
    refit = refit_unpenalized(fourier16, shrunk, clean_fourier)
    np.testing.assert_allclose(refit.amplitudes, three_spikes.amplitudes, rtol=1e-8)
    np.testing.assert_allclose(refit.phases, three_spikes.phases, atol=1e-8)


def test_check_optimality(
    fourier16: MeasurementFamily, clean_fourier: SampleVector
) -> None:
    zero = DiscreteMeasure.zero(CIRCLE)
    report = check_optimality(fourier16, zero, clean_fourier, 1e-3, 1e-5, grid_size=4096)
    assert not report.passed
    assert report.cond1_lower <= report.cond1_value
    trivial = check_optimality(
        fourier16, zero, SampleVector.zero(fourier16), 1.0, 1e-5, grid_size=4096
    )
    assert trivial.passed
    assert trivial.cond2_residual == 0.0


def test_blasso_lower_bounds_grid_lasso(
    fourier16: MeasurementFamily, clean_fourier: SampleVector
) -> None:
    lam = 1e-2 * clean_fourier.norm()
    result = solve(fourier16, clean_fourier, SolverConfig.for_family(fourier16, lam))
    oracle = grid_lasso_oracle(fourier16, clean_fourier, lam, 32 * fourier16.size, 1e-6)
    assert result.objective <= oracle.objective * (1 + 1e-6)


def test_grid_lasso_oracle_rejects_coarse_grid(
    fourier16: MeasurementFamily, clean_fourier: SampleVector
) -> None:
    with pytest.raises(DomainError, match="oracle grid"):
        grid_lasso_oracle(fourier16, clean_fourier, 1.0, 100, 1e-9)


def test_prediction_bound_holds(
    fourier16: MeasurementFamily, three_spikes: DiscreteMeasure, clean_fourier: SampleVector
) -> None:
    eps = sample_noise(NoiseModel.for_family(fourier16, 0.1, seed=5), fourier16)
    y = clean_fourier + eps
    lam = 3.0
    result = solve(fourier16, y, SolverConfig.for_family(fourier16, lam))
    check = prediction_bound_check(fourier16, three_spikes, result, eps, lam)
    assert check.holds
    assert check.e_lower <= check.e_upper
    assert check.lambda0_lower <= check.lambda0_upper


def test_gme_validates_ratio(fourier16: MeasurementFamily, clean_fourier: SampleVector) -> None:
    with pytest.raises(DomainError):
        solve_gme(fourier16, clean_fourier, lam_ratio=0.0)


def test_lambda_path_tv_decreases(
    fourier16: MeasurementFamily, clean_fourier: SampleVector
) -> None:
    norm = clean_fourier.norm()
    points = lambda_path(fourier16, clean_fourier, [1e-3 * norm, 1e-2 * norm, 1e-1 * norm])
    assert [p.lam for p in points] == pytest.approx([1e-3 * norm, 1e-2 * norm, 1e-1 * norm])
    tvs = [p.tv for p in points]
    assert tvs[0] >= tvs[1] >= tvs[2]
    assert all(p.passed for p in points)


@pytest.mark.slow
def test_blasso_matches_grid_lasso_on_random_instances() -> None:
    fam = MeasurementFamily.fourier(32)
    rng = np.random.default_rng(2024)
    for instance in range(20):
        count = int(rng.integers(1, 5))
        locs = np.sort(rng.uniform(0.0, 1.0, size=count))
        if count > 1 and np.min(np.diff(np.append(locs, locs[0] + 1.0))) < 2.5 / 32:
            continue
        truth = DiscreteMeasure(
            CIRCLE,
            tuple(
                Atom(float(t), float(a), float(p))
                for t, a, p in zip(
                    locs, rng.uniform(1.0, 5.0, count), rng.uniform(0, 2 * np.pi, count)
                )
            ),
        )
        eps = sample_noise(NoiseModel.for_family(fam, 0.1, seed=instance), fam)
        y = forward(truth, fam) + eps
        lam = 0.05 * y.norm()
        result = solve(fam, y, SolverConfig.for_family(fam, lam))
        oracle = grid_lasso_oracle(fam, y, lam, 64 * fam.size, 1e-7, max_iters=200_000)
        assert abs(result.objective - oracle.objective) <= 1e-3 * (1.0 + result.objective)
