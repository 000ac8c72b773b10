"""Orthonormal measurement families, generalized polynomials and the forward operator.

Two families carry a full evaluation path:

* Fourier on the circle, ``phi_k(x) = exp(i 2 pi k x)`` for ``k = -f_c..f_c``;
* Chebyshev on [-1, 1], ``phi_0 = 1`` and ``phi_k = sqrt(2) T_k`` for ``k = 1..m``.

A coefficient vector ``a`` represents the polynomial ``P = sum_k conj(a_k) phi_k``.
Laplace and Muntz families only expose their Bernstein constants.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import overload

import numpy as np
import numpy.typing as npt
import scipy.fft

from .errors import DomainError
from .measure import CIRCLE, INTERVAL, ComplexArray, DiscreteMeasure, Domain, FloatArray

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)

# Rows per block when building basis matrices for pointwise evaluation.
_EVAL_CHUNK = 4096

#: Minimum ratio between a sup-norm scan grid and the family size.
SUP_GRID_FACTOR = 4


class FamilyKind(StrEnum):
    FOURIER = "fourier"
    CHEBYSHEV = "chebyshev"


@dataclass(frozen=True, slots=True)
class MeasurementFamily:
    """A Fourier family of cut-off ``f_c`` or a Chebyshev family of degree ``m``.

    ``order`` holds ``f_c`` for Fourier and ``m`` for Chebyshev.
    """

    kind: FamilyKind
    order: int

    def __post_init__(self) -> None:
        if self.order < 1:
            raise DomainError(f"{self.kind} family order must be >= 1, got {self.order!r}")

    @classmethod
    def fourier(cls, f_c: int) -> MeasurementFamily:
        return cls(FamilyKind.FOURIER, int(f_c))

    @classmethod
    def chebyshev(cls, m: int) -> MeasurementFamily:
        return cls(FamilyKind.CHEBYSHEV, int(m))

    @property
    def is_fourier(self) -> bool:
        return self.kind is FamilyKind.FOURIER

    @property
    def domain(self) -> Domain:
        return CIRCLE if self.is_fourier else INTERVAL

    @property
    def indices(self) -> npt.NDArray[np.int64]:
        if self.is_fourier:
            return np.arange(-self.order, self.order + 1, dtype=np.int64)
        return np.arange(0, self.order + 1, dtype=np.int64)

    @property
    def size(self) -> int:
        return 2 * self.order + 1 if self.is_fourier else self.order + 1

    @property
    def effective_m(self) -> int:
        """The ``m`` entering every localization bound: ``2 f_c`` or the degree."""
        return 2 * self.order if self.is_fourier else self.order

    @property
    def angular_rate(self) -> float:
        """Highest frequency in the angle variable used by :func:`sup_norm_certified`.

        Fourier polynomials are trigonometric of frequency ``2 pi f_c`` in ``x``;
        Chebyshev polynomials are cosine sums of degree ``m`` in ``theta = arccos x``.
        """
        return 2.0 * math.pi * self.order if self.is_fourier else float(self.order)

    def describe(self) -> str:
        return f"fourier(f_c={self.order})" if self.is_fourier else f"chebyshev(m={self.order})"

    # -- basis --------------------------------------------------------------

    def basis(self, x: npt.ArrayLike, derivative: int = 0) -> ComplexArray:
        """Matrix ``B[j, k] = phi_k^(derivative)(x_j)``, shape ``(len(x), size)``."""
        if derivative not in (0, 1, 2):
            raise DomainError(f"derivative order must be 0, 1 or 2, got {derivative!r}")
        pts = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
        if self.is_fourier:
            k = self.indices.astype(np.float64)
            out = np.exp(2j * math.pi * np.outer(pts, k))
            if derivative:
                out = out * (2j * math.pi * k) ** derivative
            return out
        _check_interval(pts)
        return _chebyshev_basis(pts, self.order, derivative).astype(np.complex128)

    # -- quadrature ---------------------------------------------------------

    def quadrature(self, n: int | None = None) -> tuple[FloatArray, FloatArray]:
        """Nodes and weights integrating products of two family members exactly under Pi.

        Fourier uses the trapezoid rule on ``n`` equispaced points of [0, 1),
        Chebyshev uses ``n`` Gauss-Chebyshev nodes (equal weights ``1/n``).
        """
        if n is None:
            n = 2 * self.size + 1 if self.is_fourier else self.size + 1
        minimum = 2 * self.order + 1 if self.is_fourier else self.order + 1
        if n < minimum:
            raise DomainError(f"quadrature for {self.describe()} needs at least {minimum} nodes")
        if self.is_fourier:
            nodes = np.arange(n, dtype=np.float64) / n
        else:
            nodes = np.cos(math.pi * (np.arange(n, dtype=np.float64) + 0.5) / n)
        return nodes, np.full(n, 1.0 / n)


def _check_interval(pts: FloatArray) -> None:
    if pts.size and (float(pts.min()) < -1.0 or float(pts.max()) > 1.0):
        raise DomainError("Chebyshev evaluation points must lie in [-1, 1]")


def _chebyshev_basis(x: FloatArray, m: int, derivative: int) -> FloatArray:
    """Normalized Chebyshev basis or its derivatives via the three-term recurrence.

    T_{k+1} = 2x T_k - T_{k-1}, differentiated once and twice:
    T'_{k+1} = 2 T_k + 2x T'_k - T'_{k-1} and T''_{k+1} = 4 T'_k + 2x T''_k - T''_{k-1}.
    The recurrences are polynomial identities, so they hold at the endpoints too.
    """
    n = x.size
    t = np.zeros((n, m + 1))
    d1 = np.zeros((n, m + 1))
    d2 = np.zeros((n, m + 1))
    t[:, 0] = 1.0
    if m >= 1:
        t[:, 1] = x
        d1[:, 1] = 1.0
    for k in range(1, m):
        t[:, k + 1] = 2.0 * x * t[:, k] - t[:, k - 1]
        d1[:, k + 1] = 2.0 * t[:, k] + 2.0 * x * d1[:, k] - d1[:, k - 1]
        d2[:, k + 1] = 4.0 * d1[:, k] + 2.0 * x * d2[:, k] - d2[:, k - 1]
    out = (t, d1, d2)[derivative]
    out[:, 1:] *= _SQRT2
    return out


# ---------------------------------------------------------------------------
# Polynomials and samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneralizedPolynomial:
    """``P = sum_k conj(a_k) phi_k`` over a measurement family."""

    family: MeasurementFamily
    coefficients: ComplexArray

    def __post_init__(self) -> None:
        coeffs = np.array(self.coefficients, dtype=np.complex128).ravel()
        if coeffs.size != self.family.size:
            raise DomainError(
                f"{self.family.describe()} needs {self.family.size} coefficients, got {coeffs.size}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zero(cls, family: MeasurementFamily) -> GeneralizedPolynomial:
        return cls(family, np.zeros(family.size, dtype=np.complex128))

    def __call__(self, x: npt.ArrayLike) -> ComplexArray:
        return _evaluate_array(self, x, 0)

    def d1(self, x: npt.ArrayLike) -> ComplexArray:
        return _evaluate_array(self, x, 1)

    def d2(self, x: npt.ArrayLike) -> ComplexArray:
        return _evaluate_array(self, x, 2)

    @property
    def coefficient_norm(self) -> float:
        """``||a||_2``, which equals the Pi-L2 norm of P."""
        return float(np.linalg.norm(self.coefficients))

    def __add__(self, other: GeneralizedPolynomial) -> GeneralizedPolynomial:
        _same_family(self.family, other.family)
        return GeneralizedPolynomial(self.family, self.coefficients + other.coefficients)

    def __sub__(self, other: GeneralizedPolynomial) -> GeneralizedPolynomial:
        _same_family(self.family, other.family)
        return GeneralizedPolynomial(self.family, self.coefficients - other.coefficients)

    def scaled(self, factor: complex) -> GeneralizedPolynomial:
        """Multiply the polynomial (not its coefficients) by ``factor``."""
        return GeneralizedPolynomial(self.family, self.coefficients * np.conj(factor))


@dataclass(frozen=True, eq=False)
class SampleVector:
    """Observed generalized moments ``y_k``, one per family index."""

    family: MeasurementFamily
    values: ComplexArray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.complex128).ravel()
        if vals.size != self.family.size:
            raise DomainError(
                f"{self.family.describe()} needs {self.family.size} samples, got {vals.size}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, family: MeasurementFamily) -> SampleVector:
        return cls(family, np.zeros(family.size, dtype=np.complex128))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __add__(self, other: SampleVector) -> SampleVector:
        _same_family(self.family, other.family)
        return SampleVector(self.family, self.values + other.values)

    def __sub__(self, other: SampleVector) -> SampleVector:
        _same_family(self.family, other.family)
        return SampleVector(self.family, self.values - other.values)

    def as_polynomial(self) -> GeneralizedPolynomial:
        """The pairing ``<y, Phi> = sum_k conj(y_k) phi_k`` as a polynomial."""
        return GeneralizedPolynomial(self.family, self.values)


def _same_family(a: MeasurementFamily, b: MeasurementFamily) -> None:
    if a != b:
        raise DomainError(f"family mismatch: {a.describe()} vs {b.describe()}")


# ---------------------------------------------------------------------------
# Forward operator and evaluation
# ---------------------------------------------------------------------------


def forward(mu: DiscreteMeasure, fam: MeasurementFamily) -> SampleVector:
    """Generalized moments ``y_k = sum_j w_j phi_k(T_j)`` of a discrete measure."""
    if mu.domain != fam.domain:
        raise DomainError(
            f"measure lives on the {mu.domain.kind} but {fam.describe()} samples the "
            f"{fam.domain.kind}"
        )
    if len(mu) == 0:
        return SampleVector.zero(fam)
    return SampleVector(fam, fam.basis(mu.locations).T @ mu.weights)


def _evaluate_array(P: GeneralizedPolynomial, x: npt.ArrayLike, derivative: int) -> ComplexArray:
    pts = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    coeffs = np.conj(P.coefficients)
    out = np.empty(pts.size, dtype=np.complex128)
    for start in range(0, pts.size, _EVAL_CHUNK):
        block = pts[start : start + _EVAL_CHUNK]
        out[start : start + block.size] = P.family.basis(block, derivative) @ coeffs
    return out


@overload
def evaluate(P: GeneralizedPolynomial, x: float) -> complex: ...
@overload
def evaluate(P: GeneralizedPolynomial, x: Sequence[float] | FloatArray) -> ComplexArray: ...
def evaluate(
    P: GeneralizedPolynomial, x: float | Sequence[float] | FloatArray
) -> complex | ComplexArray:
    """``P(x) = sum_k conj(a_k) phi_k(x)``; scalar in, scalar out."""
    values = _evaluate_array(P, x, 0)
    return complex(values[0]) if np.ndim(x) == 0 else values


@overload
def evaluate_d1(P: GeneralizedPolynomial, x: float) -> complex: ...
@overload
def evaluate_d1(P: GeneralizedPolynomial, x: Sequence[float] | FloatArray) -> ComplexArray: ...
def evaluate_d1(
    P: GeneralizedPolynomial, x: float | Sequence[float] | FloatArray
) -> complex | ComplexArray:
    values = _evaluate_array(P, x, 1)
    return complex(values[0]) if np.ndim(x) == 0 else values


@overload
def evaluate_d2(P: GeneralizedPolynomial, x: float) -> complex: ...
@overload
def evaluate_d2(P: GeneralizedPolynomial, x: Sequence[float] | FloatArray) -> ComplexArray: ...
def evaluate_d2(
    P: GeneralizedPolynomial, x: float | Sequence[float] | FloatArray
) -> complex | ComplexArray:
    values = _evaluate_array(P, x, 2)
    return complex(values[0]) if np.ndim(x) == 0 else values


# ---------------------------------------------------------------------------
# Grid evaluation
# ---------------------------------------------------------------------------


def scan_grid(fam: MeasurementFamily, n: int) -> FloatArray:
    """The grid :func:`evaluate_grid` uses.

    Fourier: ``j/n`` for ``j = 0..n-1``. Chebyshev: ``cos(pi j/(n-1))`` in ascending
    order, i.e. a uniform grid in the angle ``theta = arccos x``.
    """
    if fam.is_fourier:
        return np.arange(n, dtype=np.float64) / n
    return np.cos(math.pi * np.arange(n - 1, -1, -1, dtype=np.float64) / (n - 1))


def evaluate_grid(P: GeneralizedPolynomial, n: int) -> tuple[FloatArray, ComplexArray]:
    """Values of ``P`` on :func:`scan_grid` through a fast transform.

    Fourier uses an inverse FFT, Chebyshev a type-I DCT in the angle variable.
    """
    fam = P.family
    minimum = fam.size if fam.is_fourier else fam.order + 2
    if n < minimum:
        raise DomainError(f"grid of {n} points is too coarse for {fam.describe()}")
    conj = np.conj(P.coefficients)
    if fam.is_fourier:
        spectrum = np.zeros(n, dtype=np.complex128)
        np.add.at(spectrum, fam.indices % n, conj)
        return scan_grid(fam, n), n * scipy.fft.ifft(spectrum)
    # DCT-I doubles every inner term, so sqrt(2) conj(a_k) enters as conj(a_k) / sqrt(2)
    b = np.zeros(n, dtype=np.complex128)
    b[0] = conj[0]
    b[1 : fam.order + 1] = conj[1:] / _SQRT2
    values = scipy.fft.dct(b.real, type=1) + 1j * scipy.fft.dct(b.imag, type=1)
    return scan_grid(fam, n), values[::-1].copy()


def evaluate_grid_d1(P: GeneralizedPolynomial, n: int) -> tuple[FloatArray, ComplexArray]:
    """Derivative on :func:`scan_grid`: ``dP/dx`` for Fourier, ``dP/dtheta`` for Chebyshev."""
    fam = P.family
    if fam.is_fourier:
        scaled = P.coefficients * np.conj(2j * math.pi * fam.indices)
        return evaluate_grid(GeneralizedPolynomial(fam, scaled), n)
    if n < fam.order + 2:
        raise DomainError(f"grid of {n} points is too coarse for {fam.describe()}")
    # dP/dtheta = -sum_k k b_k sin(k theta); DST-I covers the interior nodes
    conj = np.conj(P.coefficients)
    k = np.arange(1, fam.order + 1, dtype=np.float64)
    c = np.zeros(n - 2, dtype=np.complex128)
    c[: fam.order] = -k * _SQRT2 * conj[1:] / 2.0
    interior = scipy.fft.dst(c.real, type=1) + 1j * scipy.fft.dst(c.imag, type=1)
    values = np.zeros(n, dtype=np.complex128)
    values[1:-1] = interior
    return scan_grid(fam, n), values[::-1].copy()


def sup_norm_certified(P: GeneralizedPolynomial, grid_size: int) -> tuple[float, float]:
    """Certified bracket ``lower <= ||P||_inf <= upper``.

    ``lower`` is the largest grid modulus. At a maximizer of ``|P|``, the real
    trigonometric polynomial ``Re(exp(-i psi) P)`` peaks with zero slope, so
    Bernstein's second-derivative inequality in the angle variable gives
    ``lower >= ||P|| (1 - rho)`` with ``rho = (delta * rate)^2 / 2``, where ``delta``
    is half the angular grid step.
    """
    fam = P.family
    if grid_size < SUP_GRID_FACTOR * fam.size:
        raise DomainError(
            f"sup-norm grid of {grid_size} points is too coarse for {fam.describe()}; "
            f"need at least {SUP_GRID_FACTOR * fam.size}"
        )
    _, values = evaluate_grid(P, grid_size)
    lower = float(np.abs(values).max())
    if lower == 0.0:
        return 0.0, 0.0
    step = 1.0 / grid_size if fam.is_fourier else math.pi / (grid_size - 1)
    rho = 0.5 * (0.5 * step * fam.angular_rate) ** 2
    upper = lower / (1.0 - rho)
    logger.debug(
        "sup-norm of %s on %d points: [%.12g, %.12g]", fam.describe(), grid_size, lower, upper
    )
    return lower, upper


def gram_matrix(fam: MeasurementFamily, n: int | None = None) -> ComplexArray:
    """``G[k, l] = int conj(phi_k) phi_l dPi`` through :meth:`MeasurementFamily.quadrature`."""
    nodes, weights = fam.quadrature(n)
    basis = fam.basis(nodes)
    return np.asarray(basis.conj().T @ (weights[:, None] * basis), dtype=np.complex128)


# ---------------------------------------------------------------------------
# Bernstein constants
# ---------------------------------------------------------------------------


class BernsteinFamily(StrEnum):
    FOURIER = "fourier"
    CHEBYSHEV = "chebyshev"
    LAPLACE = "laplace"
    MUNTZ_I = "muntz-i"
    MUNTZ_II = "muntz-ii"


def bernstein_constant(
    kind: BernsteinFamily | FamilyKind | str,
    *,
    r_min: float | None = None,
    rates: Sequence[float] | None = None,
    exponents: Sequence[float] | None = None,
    x: float | None = None,
    c_eta: float | None = None,
    eta: float | None = None,
) -> float:
    """Second-derivative constant ``C`` with ``|P''| <= C ||P||_inf`` on a region.

    * Fourier: ``pi^2``, relative to ``effective_m^2 = (2 f_c)^2``.
    * Chebyshev: ``4 / r_min^2`` relative to ``m^2``, on points where
      ``sqrt(1 - x^2) >= r_min``.
    * Laplace with rates ``lambda_i``: ``(9 sum lambda_i)^2``, absolute.
    * Muntz I: ``c_eta / x^2`` at ``x`` in ``(0, 1 - eta)``, absolute.
    * Muntz II with exponents ``alpha_i > 1``: ``81 S (S + 1) / x^2`` with
      ``S = sum alpha_i``, absolute, at ``x`` in ``(0, 1]``.
    """
    try:
        family = BernsteinFamily(str(kind))
    except ValueError as e:
        raise DomainError(f"no Bernstein constant for family {kind!r}") from e
    if family is BernsteinFamily.FOURIER:
        return math.pi**2
    if family is BernsteinFamily.CHEBYSHEV:
        if r_min is None or not 0.0 < r_min <= 1.0:
            raise DomainError(
                "Chebyshev region must stay away from the endpoints "
                f"(0 < r_min <= 1), got {r_min!r}"
            )
        return 4.0 / r_min**2
    if family is BernsteinFamily.LAPLACE:
        lam = _distinct_positive(rates, "Laplace rates", lower=0.0)
        return (9.0 * float(lam.sum())) ** 2
    if family is BernsteinFamily.MUNTZ_I:
        if c_eta is None or c_eta <= 0:
            raise DomainError(f"Muntz I constant c_eta must be positive, got {c_eta!r}")
        if eta is None or not 0.0 < eta < 1.0:
            raise DomainError(f"Muntz I margin eta must lie in (0, 1), got {eta!r}")
        if x is None or not 0.0 < x < 1.0 - eta:
            raise DomainError(f"Muntz I point must lie in (0, 1 - eta), got {x!r}")
        return c_eta / x**2
    alpha = _distinct_positive(exponents, "Muntz II exponents", lower=1.0)
    if x is None or not 0.0 < x <= 1.0:
        raise DomainError(f"Muntz II point must lie in (0, 1], got {x!r}")
    total = float(alpha.sum())
    return 3.0**4 * total * (total + 1.0) / x**2


def _distinct_positive(values: Sequence[float] | None, what: str, *, lower: float) -> FloatArray:
    arr = np.asarray(values if values is not None else [], dtype=np.float64)
    if arr.size == 0:
        raise DomainError(f"{what} must not be empty")
    if float(arr.min()) <= lower or np.any(np.diff(np.sort(arr)) <= 0):
        raise DomainError(f"{what} must be distinct and > {lower:g}")
    return arr


def chebyshev_bip_constant(c0: float) -> float:
    """BIP constant ``4 / (1 - c0^2)`` used for supports kept away from the edges."""
    if not 0.0 < c0 < 1.0:
        raise DomainError(f"c0 must lie in (0, 1), got {c0!r}")
    return 4.0 / (1.0 - c0**2)


def chebyshev_region_rmin(support: npt.ArrayLike, radius: float) -> float:
    """Smallest ``sqrt(1 - x^2)`` over the union of ``[T - radius, T + radius]``."""
    pts = np.atleast_1d(np.asarray(support, dtype=np.float64))
    if pts.size == 0:
        raise DomainError("support must not be empty")
    reach = float(np.max(np.abs(pts))) + radius
    if reach >= 1.0:
        raise DomainError("near region touches the Chebyshev endpoints; the bound blows up")
    return math.sqrt(1.0 - reach**2)
