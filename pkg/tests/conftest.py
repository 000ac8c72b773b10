"""Pytest configuration and fixtures."""

from __future__ import annotations

import pytest

from spikesolve.families import MeasurementFamily, SampleVector, forward
from spikesolve.measure import CIRCLE, INTERVAL, Atom, DiscreteMeasure


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep runs independent of the caller's thread cap and log base."""
    monkeypatch.delenv("SPIKESOLVE_THREADS", raising=False)
    monkeypatch.delenv("SPIKESOLVE_LOG_BASE", raising=False)


@pytest.fixture()
def fourier16() -> MeasurementFamily:
    return MeasurementFamily.fourier(16)


@pytest.fixture()
def chebyshev16() -> MeasurementFamily:
    return MeasurementFamily.chebyshev(16)


@pytest.fixture()
def three_spikes() -> DiscreteMeasure:
    """Well separated for f_c = 16 (separation 0.3 > 2.5/16)."""
    return DiscreteMeasure(
        CIRCLE,
        (
            Atom(0.1, 2.0, 0.4),
            Atom(0.4, 1.0, 2.0),
            Atom(0.75, 1.5, 5.0),
        ),
    )


@pytest.fixture()
def interval_spikes() -> DiscreteMeasure:
    return DiscreteMeasure(
        INTERVAL,
        (
            Atom(-0.4, 1.0, 0.0),
            Atom(0.3, 2.0, 3.141592653589793),
        ),
    )


@pytest.fixture()
def clean_fourier(fourier16: MeasurementFamily, three_spikes: DiscreteMeasure) -> SampleVector:
    return forward(three_spikes, fourier16)
