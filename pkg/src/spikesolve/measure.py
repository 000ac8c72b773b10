"""Discrete complex measures on the circle [0, 1) or the interval [-1, 1].

A measure is stored in polar form: every atom carries a location, a strictly
positive amplitude and a phase in [0, 2*pi). Instances are immutable.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import numpy.typing as npt

from .errors import DomainError

FloatArray = npt.NDArray[np.float64]
ComplexArray = npt.NDArray[np.complex128]

#: Two atoms closer than this are rejected rather than merged.
ATOM_MERGE_TOLERANCE = 1e-12

# Relative slack used so that points on the boundary of the near set, up to
# rounding, are classified as near.
_BOUNDARY_RTOL = 1e-12

_TWO_PI = 2.0 * math.pi


class DomainKind(StrEnum):
    CIRCLE = "circle"
    INTERVAL = "interval"


@dataclass(frozen=True, slots=True)
class Domain:
    """The compact set carrying the measures: the unit circle or [-1, 1]."""

    kind: DomainKind

    @property
    def length(self) -> float:
        return 1.0 if self.kind is DomainKind.CIRCLE else 2.0

    @property
    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.kind is DomainKind.CIRCLE else (-1.0, 1.0)

    def distance(self, x: npt.ArrayLike, y: npt.ArrayLike) -> FloatArray:
        """Elementwise distance; wrap-around on the circle, absolute value on the interval."""
        diff = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
        if self.kind is DomainKind.CIRCLE:
            diff = np.mod(diff, 1.0)
            return np.minimum(diff, 1.0 - diff)
        return diff

    def canonical(self, x: float) -> float:
        """Map a point to its canonical representative, raising if it lies outside."""
        if not math.isfinite(x):
            raise DomainError(f"location must be finite, got {x!r}")
        if self.kind is DomainKind.CIRCLE:
            wrapped = x % 1.0
            # tiny negative inputs round up to exactly 1.0
            return 0.0 if wrapped >= 1.0 else float(wrapped)
        if not -1.0 <= x <= 1.0:
            raise DomainError(f"location {x!r} lies outside the interval [-1, 1]")
        return float(x)


CIRCLE = Domain(DomainKind.CIRCLE)
INTERVAL = Domain(DomainKind.INTERVAL)


def domain_from_name(name: str) -> Domain:
    try:
        return Domain(DomainKind(name))
    except ValueError as e:
        raise DomainError(f"unknown domain {name!r}, expected 'circle' or 'interval'") from e


@dataclass(frozen=True, slots=True)
class Atom:
    location: float
    amplitude: float
    phase: float

    @property
    def weight(self) -> complex:
        """The complex mass ``amplitude * exp(i * phase)``."""
        return complex(self.amplitude * math.cos(self.phase), self.amplitude * math.sin(self.phase))


@dataclass(frozen=True, slots=True)
class DiscreteMeasure:
    """A finite sum of weighted Dirac masses in polar form.

    Construction canonicalizes the atoms: zero-amplitude atoms are dropped,
    phases are reduced to [0, 2*pi) and circle locations to [0, 1). Negative
    amplitudes and atoms closer than :data:`ATOM_MERGE_TOLERANCE` are rejected.
    """

    domain: Domain
    atoms: tuple[Atom, ...] = field(default=())

    def __post_init__(self) -> None:
        canonical: list[Atom] = []
        for atom in self.atoms:
            if not math.isfinite(atom.amplitude) or atom.amplitude < 0:
                raise DomainError(f"atom amplitude must be a finite value >= 0, got {atom!r}")
            if atom.amplitude == 0:
                continue
            if not math.isfinite(atom.phase):
                raise DomainError(f"atom phase must be finite, got {atom!r}")
            canonical.append(
                Atom(
                    location=self.domain.canonical(atom.location),
                    amplitude=float(atom.amplitude),
                    phase=float(atom.phase % _TWO_PI),
                )
            )
        if len(canonical) >= 2:
            locs = np.array([a.location for a in canonical])
            dist = self.domain.distance(locs[:, None], locs[None, :])
            np.fill_diagonal(dist, np.inf)
            if float(dist.min()) < ATOM_MERGE_TOLERANCE:
                i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
                raise DomainError(
                    f"atoms {int(i)} and {int(j)} are closer than {ATOM_MERGE_TOLERANCE:g}; "
                    "merge them explicitly before constructing the measure"
                )
        object.__setattr__(self, "atoms", tuple(canonical))

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, domain: Domain) -> DiscreteMeasure:
        return cls(domain=domain)

    @classmethod
    def from_weights(
        cls,
        domain: Domain,
        locations: Sequence[float] | FloatArray,
        weights: Sequence[complex] | ComplexArray,
    ) -> DiscreteMeasure:
        """Build a measure from complex weights through their polar decomposition."""
        locs = np.asarray(locations, dtype=np.float64).ravel()
        w = np.asarray(weights, dtype=np.complex128).ravel()
        if locs.shape != w.shape:
            raise DomainError(f"{locs.size} locations but {w.size} weights")
        atoms = tuple(
            Atom(location=float(t), amplitude=float(abs(c)), phase=float(np.angle(c)))
            for t, c in zip(locs, w, strict=True)
        )
        return cls(domain=domain, atoms=atoms)

    # -- views --------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def locations(self) -> FloatArray:
        return np.array([a.location for a in self.atoms], dtype=np.float64)

    @property
    def amplitudes(self) -> FloatArray:
        return np.array([a.amplitude for a in self.atoms], dtype=np.float64)

    @property
    def phases(self) -> FloatArray:
        return np.array([a.phase for a in self.atoms], dtype=np.float64)

    @property
    def weights(self) -> ComplexArray:
        return self.amplitudes * np.exp(1j * self.phases)

    # -- algebra ------------------------------------------------------------

    def scaled(self, factor: float) -> DiscreteMeasure:
        """Multiply every amplitude by ``factor > 0``."""
        if factor <= 0:
            raise DomainError(f"scale factor must be positive, got {factor!r}")
        return DiscreteMeasure(
            domain=self.domain,
            atoms=tuple(Atom(a.location, a.amplitude * factor, a.phase) for a in self.atoms),
        )

    def __add__(self, other: DiscreteMeasure) -> DiscreteMeasure:
        """Union of two measures with disjoint atom sets."""
        if other.domain != self.domain:
            raise DomainError(f"cannot add measures on {self.domain.kind} and {other.domain.kind}")
        return DiscreteMeasure(domain=self.domain, atoms=self.atoms + other.atoms)


@dataclass(frozen=True, slots=True)
class NearFarPartition:
    """Indices of queried points within ``c0/m`` of a support, and the rest."""

    c0: float
    m: int
    near: tuple[int, ...]
    far: tuple[int, ...]

    @property
    def radius(self) -> float:
        return self.c0 / self.m


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def tv_norm(mu: DiscreteMeasure) -> float:
    """Total variation norm of a discrete measure: the sum of its amplitudes."""
    return float(sum(a.amplitude for a in mu.atoms))


def min_separation(support: Iterable[float], domain: Domain) -> float:
    """Smallest pairwise distance among the points of ``support``."""
    pts = np.asarray(list(support), dtype=np.float64)
    if pts.size < 2:
        raise DomainError(f"minimum separation needs at least 2 points, got {pts.size}")
    dist = domain.distance(pts[:, None], pts[None, :])
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def distance_to_set(points: npt.ArrayLike, support: npt.ArrayLike, domain: Domain) -> FloatArray:
    """For each point, the distance to the nearest element of ``support``."""
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    sup = np.atleast_1d(np.asarray(support, dtype=np.float64))
    if sup.size == 0:
        raise DomainError("support must not be empty")
    return np.asarray(domain.distance(pts[:, None], sup[None, :]).min(axis=1), dtype=np.float64)


def nearest_in_set(
    points: npt.ArrayLike, support: npt.ArrayLike, domain: Domain
) -> tuple[npt.NDArray[np.intp], FloatArray]:
    """Index of, and distance to, the nearest support element for every point."""
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    sup = np.atleast_1d(np.asarray(support, dtype=np.float64))
    if sup.size == 0:
        raise DomainError("support must not be empty")
    dist = domain.distance(pts[:, None], sup[None, :])
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(pts.size), idx]


def partition_near_far(
    points: Sequence[float] | FloatArray,
    support: Sequence[float] | FloatArray,
    c0: float,
    m: int,
    *,
    domain: Domain = CIRCLE,
) -> NearFarPartition:
    """Split ``points`` into the near set {min d(x, T) <= c0/m} and its complement."""
    if c0 <= 0:
        raise DomainError(f"c0 must be positive, got {c0!r}")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m!r}")
    pts = np.asarray(points, dtype=np.float64).ravel()
    if pts.size == 0:
        return NearFarPartition(c0=c0, m=m, near=(), far=())
    dist = distance_to_set(pts, support, domain)
    radius = c0 / m
    is_near = dist <= radius * (1.0 + _BOUNDARY_RTOL)
    near = tuple(int(i) for i in np.flatnonzero(is_near))
    far = tuple(int(i) for i in np.flatnonzero(~is_near))
    return NearFarPartition(c0=c0, m=m, near=near, far=far)
