"""Dual certificates: Fourier construction, QIC/BIP verification and interpolation polynomials.

A certificate for a measure with atoms ``(T_k, theta_k)`` is a generalized
polynomial with ``P(T_k) = exp(-i theta_k)`` and ``||P||_inf <= 1``. The QIC
asks in addition that

    1 - |P(x)| >= min{C_a m^2 d(x, T)^2, C_b}   for every x.

Verification is certified rather than sampled. Near each spike, a second-order
Taylor envelope of ``exp(i theta_k) P(T_k + s)`` is built from densely sampled
second derivatives, inflated by a third-derivative bound. Everywhere else the
grid cells are bounded with the first derivative at the node and a Bernstein
bound on the second derivative.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, NumericalError, PreconditionError
from .families import (
    GeneralizedPolynomial,
    MeasurementFamily,
    evaluate_grid,
    evaluate_grid_d1,
    sup_norm_certified,
)
from .measure import (
    CIRCLE,
    DiscreteMeasure,
    FloatArray,
    distance_to_set,
    min_separation,
)
from .noise import trial_generator

logger = logging.getLogger(__name__)

#: Minimum separation, in units of ``1/f_c``, for the Fourier construction.
FOURIER_SEPARATION = 2.5
#: The Fourier construction is only proven for ``f_c >= 128``.
FOURIER_MIN_FC = 128
PHASE_TOLERANCE = 1e-8
#: Minimum QIC grid, in multiples of the family size.
QIC_GRID_FACTOR = 16
#: Default QIC grid density: points per ``1/order``.
QIC_POINTS_PER_UNIT = 64

_SEPARATION_RTOL = 1e-9
_MAX_CONDITION = 1e12
_NEAR_SAMPLES = 256
_MAX_NEAR_SAMPLES = 2_000_000


@dataclass(frozen=True, slots=True)
class QicConstants:
    """Quadratic isolation constants; ``c0 = sqrt(c_b / c_a)`` is the near-region scale."""

    c_a: float
    c_b: float

    def __post_init__(self) -> None:
        if not self.c_a > 0:
            raise DomainError(f"C_a must be positive, got {self.c_a!r}")
        if not 0 < self.c_b < 1:
            raise DomainError(f"C_b must lie in (0, 1), got {self.c_b!r}")

    @property
    def c0(self) -> float:
        return math.sqrt(self.c_b / self.c_a)


#: Constants enjoyed by supports separated by 2.5/f_c, f_c >= 128.
FOURIER_QIC = QicConstants(c_a=0.0838, c_b=0.0092)


@dataclass(frozen=True, eq=False)
class CertificateReport:
    """Outcome of a certified QIC check.

    ``near_margin`` is the relative curvature slack of the Taylor envelopes and
    ``far_margin`` the worst cell slack away from the spikes. ``qic_margin`` is
    the signed smaller of the two in absolute units, the near slack scaled by
    ``C_a m^2 (c0/m)^2``. All three are >= 0 on a pass.
    """

    polynomial: GeneralizedPolynomial
    qic: QicConstants
    phase_residual: float
    derivative_residual: float
    qic_margin: float
    near_margin: float
    far_margin: float
    grid_size: int
    passed: bool


@dataclass(frozen=True, slots=True)
class BipReport:
    worst_ratio: float
    c_c: float
    c0: float
    trials: int
    passed: bool


@dataclass(frozen=True, slots=True)
class InterpolationReport:
    """Checks of ``Q_j``: interpolation, flatness, and its quadratic and far bounds."""

    j: int
    interpolation_residual: float
    derivative_residual: float
    near_own_ratio: float
    near_other_ratio: float
    far_max: float
    far_bound: float
    passed: bool


# ---------------------------------------------------------------------------
# Fourier construction
# ---------------------------------------------------------------------------


def squared_fejer_coefficients(f_c: int) -> FloatArray:
    """Fourier coefficients of the squared Fejer kernel, indexed ``-f_c..f_c``.

    The kernel is ``F_M(t)^2`` with ``M = f_c // 2 + 1`` and normalized so that
    ``K(0) = 1``; its frequencies stay within ``|k| <= 2(M - 1) <= f_c``.
    """
    half = f_c // 2 + 1
    j = np.arange(-(half - 1), half, dtype=np.float64)
    tri = (half - np.abs(j)) / half**2
    conv = np.convolve(tri, tri)
    coeffs = np.zeros(2 * f_c + 1)
    offset = f_c - (half - 1) * 2
    coeffs[offset : offset + conv.size] = conv
    return coeffs


def _kernel_matrices(
    kc: FloatArray, f_c: int, diff: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    k = np.arange(-f_c, f_c + 1, dtype=np.float64)
    w = 2.0 * math.pi * k
    phase = np.multiply.outer(diff, w)
    cos, sin = np.cos(phase), np.sin(phase)
    k0 = cos @ kc
    k1 = -(sin @ (kc * w))
    k2 = -(cos @ (kc * w**2))
    return k0, k1, k2


def _check_separation(support: FloatArray, f_c: int) -> None:
    if support.size < 2:
        return
    sep = min_separation(support, CIRCLE)
    needed = FOURIER_SEPARATION / f_c
    if sep < needed * (1.0 - _SEPARATION_RTOL):
        raise PreconditionError(
            f"minimum separation {sep:.6g} is below {FOURIER_SEPARATION}/f_c = {needed:.6g}"
        )


def construct_fourier_certificate(
    support: Sequence[float] | FloatArray,
    phases: Sequence[float] | FloatArray,
    f_c: int,
    *,
    enforce_regime: bool = True,
) -> GeneralizedPolynomial:
    """Interpolate ``exp(-i theta_k)`` with zero slope at every ``T_k``.

    ``P(t) = sum_j alpha_j K(t - T_j) + beta_j K'(t - T_j)`` with ``K`` the squared
    Fejer kernel. ``enforce_regime=False`` skips the ``f_c >= 128`` gate for
    exploratory runs; the separation gate always applies.
    """
    locs = np.asarray(support, dtype=np.float64).ravel() % 1.0
    theta = np.asarray(phases, dtype=np.float64).ravel()
    if locs.size == 0:
        raise DomainError("certificate support must not be empty")
    if locs.size != theta.size:
        raise DomainError(f"{locs.size} support points but {theta.size} phases")
    if enforce_regime and f_c < FOURIER_MIN_FC:
        raise PreconditionError(f"the Fourier certificate needs f_c >= {FOURIER_MIN_FC}, got {f_c}")
    if f_c < 2:
        raise DomainError(f"f_c must be >= 2, got {f_c}")
    _check_separation(locs, f_c)

    kc = squared_fejer_coefficients(f_c)
    diff = locs[:, None] - locs[None, :]
    k0, k1, k2 = _kernel_matrices(kc, f_c, diff.ravel())
    s = locs.size
    k0, k1, k2 = k0.reshape(s, s), k1.reshape(s, s), k2.reshape(s, s)
    scale = math.sqrt(abs(float(k2[0, 0])))
    system = np.block([[k0, k1 / scale], [k1 / scale, k2 / scale**2]])
    cond = float(np.linalg.cond(system))
    if not math.isfinite(cond) or cond > _MAX_CONDITION:
        raise NumericalError(f"certificate interpolation system is singular (cond={cond:.3g})")
    rhs = np.concatenate([np.exp(-1j * theta), np.zeros(s, dtype=np.complex128)])
    try:
        sol = scipy.linalg.solve(system.astype(np.complex128), rhs)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError(f"certificate interpolation system is singular: {e}") from e
    alpha, beta = sol[:s], sol[s:] / scale

    k = np.arange(-f_c, f_c + 1, dtype=np.float64)
    shifts = np.exp(-2j * math.pi * np.outer(k, locs))
    p_hat = kc * (shifts @ alpha + (2j * math.pi * k) * (shifts @ beta))
    fam = MeasurementFamily.fourier(f_c)
    P = GeneralizedPolynomial(fam, np.conj(p_hat))

    residual = float(np.max(np.abs(P(locs) - np.exp(-1j * theta))))
    if residual > PHASE_TOLERANCE:
        raise NumericalError(f"certificate misses the phases by {residual:.3g}")
    logger.debug("fourier certificate: %d spikes, f_c=%d, cond=%.3g", s, f_c, cond)
    return P


def certificate_for(
    truth: DiscreteMeasure, f_c: int, *, enforce_regime: bool = True
) -> GeneralizedPolynomial:
    """:func:`construct_fourier_certificate` for the atoms of a measure."""
    return construct_fourier_certificate(
        truth.locations, truth.phases, f_c, enforce_regime=enforce_regime
    )


# ---------------------------------------------------------------------------
# QIC verification
# ---------------------------------------------------------------------------


def default_qic_grid(fam: MeasurementFamily) -> int:
    return max(QIC_POINTS_PER_UNIT * fam.order, QIC_GRID_FACTOR * fam.size)


def _third_derivative_bound(P: GeneralizedPolynomial, sup_upper: float) -> float:
    fam = P.family
    if fam.is_fourier:
        return float(fam.angular_rate**3 * sup_upper)
    # |T_k'''| peaks at x = 1 where it equals k^2 (k^2 - 1)(k^2 - 4) / 15
    k = np.arange(fam.order + 1, dtype=np.float64)
    t3 = math.sqrt(2.0) * k**2 * (k**2 - 1) * (k**2 - 4) / 15.0
    return float(P.coefficient_norm * np.linalg.norm(t3))


def _near_envelope(
    P: GeneralizedPolynomial,
    center: float,
    phase: float,
    radius: float,
    required: float,
    m3: float,
) -> float:
    """Worst relative curvature slack of ``1 - |P|`` on ``|s| <= radius`` around one spike.

    With ``g(s) = exp(i theta) P(T + s) = u + i v`` and ``u'' <= -A``, ``|v''| <= B``
    on ``[0, s]``, ``|g(s)|^2 <= (1 - A s^2/2)^2 + (|v'(0)| s + B s^2/2)^2``, so
    ``1 - |g| >= (1 - |g|^2)/2`` exceeds ``required * s^2`` whenever the returned
    bracket is non-negative.
    """
    fam = P.family
    rot = complex(math.cos(phase), math.sin(phase))
    at_center = rot * P.d1([center])[0]
    v1 = abs(at_center.imag)
    curvature = -(rot * P.d2([center])[0]).real
    spacing = radius / _NEAR_SAMPLES
    if m3 > 0 and curvature > 0:
        spacing = min(spacing, 0.1 * curvature / m3)
    n = min(int(math.ceil(radius / spacing)), _MAX_NEAR_SAMPLES)
    s = np.linspace(0.0, radius, n + 1)
    slack = 0.5 * (s[1] - s[0]) * m3
    worst = math.inf
    for sign in (1.0, -1.0):
        x = center + sign * s
        if not fam.is_fourier:
            keep = np.abs(x) <= 1.0
            x, ss = x[keep], s[keep]
        else:
            ss = s
        if ss.size < 2:
            continue
        g2 = rot * P.d2(x)
        a = -(np.maximum.accumulate(g2.real) + slack)
        b = np.maximum.accumulate(np.abs(g2.imag)) + slack
        c = np.maximum.accumulate(np.abs(g2.real)) + slack
        sq = ss**2
        bracket = 0.5 * (a - v1**2 - v1 * b * ss - (a**2 + b**2) * sq / 4.0) - required
        # |u| <= 1 - A s^2/2 also needs u >= -(1 - A s^2/2)
        bracket = np.where((a + c) * sq <= 4.0, bracket, -math.inf)
        worst = min(worst, float(np.min(bracket[1:])) / required)
    return worst


def _far_cells(
    P: GeneralizedPolynomial,
    support: FloatArray,
    qic: QicConstants,
    grid_size: int,
    sup_upper: float,
) -> float:
    """Worst ``1 - upper|P| - rhs`` over grid cells not contained in a near interval."""
    fam = P.family
    m = fam.effective_m
    x, values = evaluate_grid(P, grid_size)
    _, slope = evaluate_grid_d1(P, grid_size)
    if fam.is_fourier:
        delta = 0.5 / grid_size
        width = np.full(grid_size, delta)
    else:
        delta = 0.5 * math.pi / (grid_size - 1)
        width = delta * np.sqrt(np.clip(1.0 - x**2, 0.0, None)) + 0.5 * delta**2
    upper = np.maximum(np.abs(values + delta * slope), np.abs(values - delta * slope))
    upper = upper + 0.5 * delta**2 * fam.angular_rate**2 * sup_upper
    if support.size:
        dist = distance_to_set(x, support, fam.domain)
        inside = dist + width <= qic.c0 / m
        reach = dist + width
        rhs = np.minimum(qic.c_a * m**2 * reach**2, qic.c_b)
    else:
        inside = np.zeros(grid_size, dtype=bool)
        rhs = np.full(grid_size, qic.c_b)
    margin = 1.0 - upper - rhs
    if np.all(inside):
        return math.inf
    return float(np.min(margin[~inside]))


def verify_qic(
    P: GeneralizedPolynomial,
    support: Sequence[float] | FloatArray,
    phases: Sequence[float] | FloatArray,
    qic: QicConstants,
    grid_size: int | None = None,
    *,
    tol: float = PHASE_TOLERANCE,
) -> CertificateReport:
    """Certified check of the QIC inequality and of the phase interpolation.

    Failure is reported, never raised.
    """
    fam = P.family
    n = grid_size if grid_size is not None else default_qic_grid(fam)
    if n < QIC_GRID_FACTOR * fam.size:
        raise DomainError(f"QIC grid of {n} points is too coarse for {fam.describe()}")
    locs = np.asarray(support, dtype=np.float64).ravel()
    theta = np.asarray(phases, dtype=np.float64).ravel()
    if locs.size != theta.size:
        raise DomainError(f"{locs.size} support points but {theta.size} phases")
    if fam.is_fourier:
        locs = locs % 1.0

    _, sup_upper = sup_norm_certified(P, n)
    if locs.size:
        rot = np.exp(1j * theta)
        phase_residual = float(np.max(np.abs(P(locs) - np.exp(-1j * theta))))
        # only the radial slope has to vanish at a maximum of |P|
        derivative_residual = float(np.max(np.abs((rot * P.d1(locs)).real))) / fam.angular_rate
    else:
        phase_residual = derivative_residual = 0.0

    m = fam.effective_m
    required = qic.c_a * m**2
    radius = qic.c0 / m
    near_margin = math.inf
    if locs.size and phase_residual <= 0.5:
        m3 = _third_derivative_bound(P, sup_upper)
        for t, th in zip(locs, theta, strict=True):
            near_margin = min(
                near_margin, _near_envelope(P, float(t), float(th), radius, required, m3)
            )
    elif locs.size:
        near_margin = -math.inf
    far_margin = _far_cells(P, locs, qic, n, sup_upper)

    # near slack in absolute units at the edge of the near region
    near_slack = required * radius**2 * near_margin if locs.size else math.inf
    qic_margin = min(far_margin, near_slack)
    passed = (
        phase_residual <= tol
        and derivative_residual <= tol
        and near_margin >= 0.0
        and far_margin >= 0.0
    )
    logger.info(
        "QIC(%.4g, %.4g) on %s: residual=%.3g near=%.4g far=%.4g passed=%s",
        qic.c_a,
        qic.c_b,
        fam.describe(),
        phase_residual,
        near_margin,
        far_margin,
        passed,
    )
    return CertificateReport(
        polynomial=P,
        qic=qic,
        phase_residual=phase_residual,
        derivative_residual=derivative_residual,
        qic_margin=float(qic_margin),
        near_margin=near_margin,
        far_margin=far_margin,
        grid_size=n,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# Bernstein isolation property
# ---------------------------------------------------------------------------


def _near_points(fam: MeasurementFamily, support: FloatArray, radius: float) -> FloatArray:
    offsets = np.linspace(-radius, radius, 129)
    pts = (support[:, None] + offsets[None, :]).ravel()
    if fam.is_fourier:
        return pts % 1.0
    return pts[np.abs(pts) <= 1.0]


def _check_edges(fam: MeasurementFamily, support: FloatArray, c0: float) -> None:
    if fam.is_fourier or support.size == 0:
        return
    edge = float(np.min(1.0 - np.abs(support)))
    if edge < 2.0 * c0 / fam.effective_m:
        raise PreconditionError(
            f"support lies {edge:.6g} from the interval edges; BIP needs at least "
            f"2 c0 / m = {2.0 * c0 / fam.effective_m:.6g}"
        )


def bip_ratio(
    P: GeneralizedPolynomial,
    support: Sequence[float] | FloatArray,
    c0: float,
    c_c: float,
    *,
    sup_norm: float | None = None,
) -> float:
    """``max |P''|`` over the near region divided by ``c_c m^2 ||P||_inf``."""
    fam = P.family
    locs = np.asarray(support, dtype=np.float64).ravel()
    if locs.size == 0:
        raise DomainError("support must not be empty")
    norm = sup_norm if sup_norm is not None else sup_norm_certified(P, 64 * fam.size)[0]
    if norm == 0.0:
        return 0.0
    pts = _near_points(fam, locs, c0 / fam.effective_m)
    peak = float(np.max(np.abs(P.d2(pts))))
    return peak / (c_c * fam.effective_m**2 * norm)


def verify_bip(
    fam: MeasurementFamily,
    support: Sequence[float] | FloatArray,
    c0: float,
    c_c: float,
    trials: int,
    *,
    seed: int = 0,
) -> BipReport:
    """Random-polynomial falsification test of ``|P''| <= c_c m^2 ||P||_inf`` near the support."""
    locs = np.asarray(support, dtype=np.float64).ravel()
    if c0 <= 0 or c_c <= 0:
        raise DomainError("c0 and C_c must be positive")
    _check_edges(fam, locs, c0)
    worst = 0.0
    for trial in range(trials):
        rng = trial_generator(seed, trial)
        coeffs = rng.standard_normal(fam.size) + 1j * rng.standard_normal(fam.size)
        if not fam.is_fourier:
            coeffs = coeffs.real.astype(np.complex128)
        P = GeneralizedPolynomial(fam, coeffs)
        lower, _ = sup_norm_certified(P, 64 * fam.size)
        worst = max(worst, bip_ratio(P, locs, c0, c_c, sup_norm=lower))
    passed = worst <= 1.0
    logger.info("BIP(c0=%.4g, C_c=%.4g) on %s: worst ratio %.4g", c0, c_c, fam.describe(), worst)
    return BipReport(worst_ratio=worst, c_c=c_c, c0=c0, trials=trials, passed=passed)


# ---------------------------------------------------------------------------
# Interpolation polynomials Q_j
# ---------------------------------------------------------------------------


def build_interpolation_qj(
    support: Sequence[float] | FloatArray,
    j: int,
    fam: MeasurementFamily,
    *,
    enforce_regime: bool = True,
) -> GeneralizedPolynomial:
    """``Q_j = (P + P~) / 2``: 1 at ``T_j``, 0 at the other spikes, flat at all of them.

    ``P`` interpolates the all-ones pattern and ``P~`` the pattern that is +1 at
    ``T_j`` and -1 elsewhere.
    """
    if not fam.is_fourier:
        raise DomainError("interpolation polynomials Q_j are built for the Fourier family only")
    locs = np.asarray(support, dtype=np.float64).ravel()
    if not 0 <= j < locs.size:
        raise DomainError(f"index j={j} outside the support of size {locs.size}")
    ones = np.zeros(locs.size)
    signs = np.full(locs.size, math.pi)
    signs[j] = 0.0
    P = construct_fourier_certificate(locs, ones, fam.order, enforce_regime=enforce_regime)
    P_tilde = construct_fourier_certificate(locs, signs, fam.order, enforce_regime=enforce_regime)
    return GeneralizedPolynomial(fam, 0.5 * (P.coefficients + P_tilde.coefficients))


def verify_interpolation_qj(
    Q: GeneralizedPolynomial,
    support: Sequence[float] | FloatArray,
    j: int,
    qic: QicConstants,
    c_c: float,
    *,
    grid_size: int | None = None,
    tol: float = PHASE_TOLERANCE,
) -> InterpolationReport:
    """Check the interpolation, flatness and quadratic bounds of ``Q_j``.

    Near spikes the bounds ``|1 - Q_j| <= (C_c/2) m^2 d^2`` (own spike) and
    ``|Q_j| <= (C_c/2) m^2 d^2`` (others) are sampled on a fine grid; far from
    the support ``|Q_j| <= 1 - C_b`` is certified cell by cell.
    """
    fam = Q.family
    locs = np.asarray(support, dtype=np.float64).ravel() % 1.0
    n = grid_size if grid_size is not None else default_qic_grid(fam)
    target = np.zeros(locs.size)
    target[j] = 1.0
    interp = float(np.max(np.abs(Q(locs) - target)))
    slope = float(np.max(np.abs(Q.d1(locs)))) / fam.angular_rate

    m = fam.effective_m
    radius = qic.c0 / m
    offsets = np.linspace(-radius, radius, 513)
    offsets = offsets[offsets != 0.0]
    quad = 0.5 * c_c * m**2 * offsets**2
    own = float(np.max(np.abs(1.0 - Q(locs[j] + offsets)) / quad))
    other = 0.0
    for k, t in enumerate(locs):
        if k != j:
            other = max(other, float(np.max(np.abs(Q(t + offsets)) / quad)))

    _, sup_upper = sup_norm_certified(Q, n)
    x, values = evaluate_grid(Q, n)
    _, d1 = evaluate_grid_d1(Q, n)
    delta = 0.5 / n
    upper = np.maximum(np.abs(values + delta * d1), np.abs(values - delta * d1))
    upper = upper + 0.5 * delta**2 * fam.angular_rate**2 * sup_upper
    far = distance_to_set(x, locs, fam.domain) - delta > radius
    far_max = float(np.max(upper[far])) if np.any(far) else 0.0
    far_bound = 1.0 - qic.c_b

    passed = (
        interp <= tol
        and slope <= tol
        and own <= 1.0 + tol
        and other <= 1.0 + tol
        and far_max <= far_bound
    )
    return InterpolationReport(
        j=j,
        interpolation_residual=interp,
        derivative_residual=slope,
        near_own_ratio=own,
        near_other_ratio=other,
        far_max=far_max,
        far_bound=far_bound,
        passed=passed,
    )
