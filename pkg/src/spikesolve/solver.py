"""Beurling LASSO over a measurement family.

The pipeline is ``solve_dual -> extract_support -> fit_amplitudes`` followed by
a support-exchange loop and :func:`check_optimality`.

The dual program ``min ||a - y/lambda||^2 s.t. ||<a, Phi>||_inf <= 1`` is solved
with its constraint imposed on a grid. It is the dual of the grid LASSO over
atoms at the grid nodes, so FISTA on that LASSO yields the projection
``a = (y - W c)/lambda``. Feasibility off the grid is then certified with
:func:`sup_norm_certified`. The reported slack shrinks lambda to
``lambda / (1 + slack)`` downstream.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.fft
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, DomainError
from .families import (
    SUP_GRID_FACTOR,
    GeneralizedPolynomial,
    MeasurementFamily,
    SampleVector,
    evaluate,
    evaluate_grid,
    forward,
    scan_grid,
    sup_norm_certified,
)
from .measure import ComplexArray, DiscreteMeasure, Domain, DomainKind, FloatArray, tv_norm
from .noise import noise_norms
from .settings import SolverSettings

logger = logging.getLogger(__name__)

#: Fitted atoms with a smaller modulus are dropped.
AMPLITUDE_FLOOR = 1e-10
#: Amplitude fits above this condition number are flagged.
ILL_CONDITIONED = 1e10
MIN_DUAL_GRID_FACTOR = 8
MIN_ORACLE_GRID_FACTOR = 32

_GAP_CHECK_EVERY = 25
_POLISH_ROUNDS = 40
_FIT_GAP_TOL = 1e-13
_BACKTRACK_STEPS = (1.0, 0.5, 0.25, 0.125, 0.0625)
# Peaks further than this many grid steps from every atom become new atoms.
_EXCHANGE_REACH = 2.0


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SolverConfig:
    """Everything one solve needs besides the data.

    Grid sizes are absolute point counts; :meth:`for_family` derives them from
    :class:`SolverSettings` factors.
    """

    lam: float
    dual_grid: int
    certify_grid: int
    max_iters: int = 20000
    primal_dual_gap_tol: float = 1e-9
    delta_sup: float = 1e-3
    refine_tol: float = 1e-6
    optimality_tol: float = 1e-5
    max_exchange_rounds: int = 40
    debias: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"lambda must be a positive finite number, got {self.lam!r}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.max_exchange_rounds < 0:
            raise DomainError(f"max_exchange_rounds must be >= 0, got {self.max_exchange_rounds}")
        for name in ("primal_dual_gap_tol", "refine_tol", "optimality_tol"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 < self.delta_sup < 1.0:
            raise DomainError(f"delta_sup must lie in (0, 1), got {self.delta_sup!r}")

    @classmethod
    def for_family(
        cls, fam: MeasurementFamily, lam: float, settings: SolverSettings | None = None
    ) -> SolverConfig:
        s = settings if settings is not None else SolverSettings()
        return cls(
            lam=lam,
            dual_grid=s.dual_grid_factor * fam.size,
            certify_grid=s.certify_grid_factor * fam.size,
            max_iters=s.max_iters,
            primal_dual_gap_tol=s.primal_dual_gap_tol,
            delta_sup=s.delta_sup,
            refine_tol=s.refine_tol,
            optimality_tol=s.optimality_tol,
            max_exchange_rounds=s.max_exchange_rounds,
            debias=s.debias,
        )

    def check_family(self, fam: MeasurementFamily) -> None:
        if self.dual_grid < MIN_DUAL_GRID_FACTOR * fam.size:
            raise DomainError(
                f"dual grid of {self.dual_grid} points is below "
                f"{MIN_DUAL_GRID_FACTOR} x {fam.size} for {fam.describe()}"
            )
        if self.certify_grid < SUP_GRID_FACTOR * fam.size:
            raise DomainError(
                f"certification grid of {self.certify_grid} points is too coarse "
                f"for {fam.describe()}"
            )


@dataclass(frozen=True, slots=True)
class OptimalityReport:
    """Both first-order conditions of a BLASSO solution.

    ``cond1_value`` is the certified upper bound on ``||<c(mu) - y, Phi>||_inf``
    and ``cond1_lower`` the grid value under it.
    """

    cond1_value: float
    cond1_lower: float
    cond2_residual: float
    lam: float
    tol: float
    passed: bool


@dataclass(frozen=True, slots=True)
class DualSolution:
    polynomial: GeneralizedPolynomial
    grid_nodes: FloatArray
    grid_weights: ComplexArray
    gap: float
    iterations: int
    sup_lower: float
    sup_upper: float
    feasibility_slack: float


@dataclass(frozen=True, slots=True)
class AmplitudeFit:
    measure: DiscreteMeasure
    objective: float
    condition_number: float
    ill_conditioned: bool
    iterations: int
    converged: bool


@dataclass(frozen=True, slots=True)
class SolveResult:
    """An atomic BLASSO solution with its dual certificate and diagnostics."""

    measure: DiscreteMeasure
    dual_coefficients: GeneralizedPolynomial
    objective: float
    gap: float
    optimality: OptimalityReport
    lam: float
    lam_effective: float
    feasibility_slack: float
    dual_iterations: int
    exchange_rounds: int
    amplitude_condition: float
    ill_conditioned: bool
    cardinality_ok: bool
    debiased: DiscreteMeasure | None = None


@dataclass(frozen=True, slots=True)
class OracleResult:
    measure: DiscreteMeasure
    objective: float
    gap: float
    iterations: int


@dataclass(frozen=True, slots=True)
class PredictionCheck:
    """``||E||_inf <= lambda + lambda_0`` for ``E = <c(mu_hat) - c(mu), Phi>``."""

    e_lower: float
    e_upper: float
    lambda0_lower: float
    lambda0_upper: float
    lam: float
    slack: float
    holds: bool


@dataclass(frozen=True, slots=True)
class PathPoint:
    lam: float
    tv: float
    objective: float
    support_size: int
    passed: bool


# ---------------------------------------------------------------------------
# Complex LASSO machinery
# ---------------------------------------------------------------------------


class _Dictionary:
    """Atoms ``Phi(x_j)`` as the columns of ``W``, mapping node weights to samples."""

    def __init__(self, fam: MeasurementFamily, nodes: FloatArray, *, fft: bool = False) -> None:
        self.fam = fam
        self.nodes = nodes
        if fft:
            # uniform Fourier nodes j/n with n >= size: W W^H = n I
            self._slots = fam.indices % nodes.size
            self.lipschitz = float(nodes.size)
            self._matrix: ComplexArray | None = None
        else:
            self._matrix = np.ascontiguousarray(fam.basis(nodes).T)
            top = scipy.linalg.svdvals(self._matrix)[0] if nodes.size else 0.0
            self.lipschitz = float(top) ** 2

    def forward(self, c: ComplexArray) -> ComplexArray:
        if self._matrix is not None:
            return np.asarray(self._matrix @ c, dtype=np.complex128)
        n = self.nodes.size
        return np.asarray(n * scipy.fft.ifft(c)[self._slots], dtype=np.complex128)

    def adjoint(self, v: ComplexArray) -> ComplexArray:
        if self._matrix is not None:
            return np.asarray(self._matrix.conj().T @ v, dtype=np.complex128)
        spread = np.zeros(self.nodes.size, dtype=np.complex128)
        spread[self._slots] = v
        return np.asarray(scipy.fft.fft(spread), dtype=np.complex128)

    def columns(self, idx: npt.NDArray[np.intp]) -> ComplexArray:
        if self._matrix is not None:
            return self._matrix[:, idx]
        return np.ascontiguousarray(self.fam.basis(self.nodes[idx]).T)


@dataclass(frozen=True, slots=True)
class _LassoState:
    weights: ComplexArray
    dual: ComplexArray
    primal: float
    gap: float
    iterations: int

    @property
    def relative_gap(self) -> float:
        return self.gap / self.primal if self.primal > 0 else 0.0


def _soft_threshold(z: ComplexArray, tau: float) -> ComplexArray:
    modulus = np.abs(z)
    factor = np.zeros_like(modulus)
    keep = modulus > tau
    factor[keep] = 1.0 - tau / modulus[keep]
    return z * factor


def _assess(
    op: _Dictionary, y: ComplexArray, lam: float, c: ComplexArray, iterations: int
) -> _LassoState:
    """Primal value and duality gap, the dual point scaled into grid feasibility."""
    r = y - op.forward(c)
    correlation = float(np.abs(op.adjoint(r)).max()) if c.size else 0.0
    a = r / (lam * max(1.0, correlation / lam))
    primal = 0.5 * float(np.vdot(r, r).real) + lam * float(np.abs(c).sum())
    dual = 0.5 * float(np.vdot(y, y).real) - 0.5 * float(np.linalg.norm(y - lam * a) ** 2)
    return _LassoState(
        weights=c, dual=a, primal=primal, gap=max(primal - dual, 0.0), iterations=iterations
    )


def _polish(
    op: _Dictionary, y: ComplexArray, lam: float, c: ComplexArray, iterations: int
) -> _LassoState | None:
    """Stationarity ``G x = W_S^H y - lambda x/|x|`` on the active set, by fixed point."""
    active = np.flatnonzero(np.abs(c) > 0)
    if active.size == 0 or active.size > op.fam.size:
        return None
    cols = op.columns(active)
    gram = cols.conj().T @ cols
    rhs = cols.conj().T @ y
    try:
        factor = scipy.linalg.cho_factor(gram)
    except scipy.linalg.LinAlgError:
        return None
    x = c[active]
    for _ in range(_POLISH_ROUNDS):
        modulus = np.abs(x)
        if not np.all(np.isfinite(x)) or np.any(modulus == 0):
            return None
        x_next = scipy.linalg.cho_solve(factor, rhs - lam * x / modulus)
        done = np.linalg.norm(x_next - x) <= 1e-15 * np.linalg.norm(x_next)
        x = x_next
        if done:
            break
    if not np.all(np.isfinite(x)):
        return None
    full = np.zeros_like(c)
    full[active] = x
    return _assess(op, y, lam, full, iterations)


def _lasso(
    op: _Dictionary,
    y: ComplexArray,
    lam: float,
    *,
    start: ComplexArray,
    max_iters: int,
    tol: float,
) -> tuple[_LassoState, bool]:
    """FISTA with gradient restarts on ``1/2 ||W c - y||^2 + lambda ||c||_1``.

    Every few iterations the iterate is polished on its active set; the
    polished point is adopted when it lowers the objective.
    """
    c = start.astype(np.complex128, copy=True)
    state = _assess(op, y, lam, c, 0)
    if state.relative_gap <= tol:
        return state, True
    if op.lipschitz == 0:
        return state, False
    step = 1.0 / op.lipschitz
    z = c.copy()
    t = 1.0
    best = state
    for it in range(1, max_iters + 1):
        grad = op.adjoint(op.forward(z) - y)
        c_next = _soft_threshold(z - step * grad, lam * step)
        if np.vdot(z - c_next, c_next - c).real > 0:
            t = 1.0
            z = c_next.copy()
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = c_next + ((t - 1.0) / t_next) * (c_next - c)
            t = t_next
        c = c_next
        if it % _GAP_CHECK_EVERY and it != max_iters:
            continue
        state = _assess(op, y, lam, c, it)
        polished = _polish(op, y, lam, c, it)
        if polished is not None and polished.primal < state.primal:
            state = polished
            c = polished.weights.copy()
            z = c.copy()
            t = 1.0
        if state.relative_gap < best.relative_gap:
            best = state
        if state.relative_gap <= tol:
            return state, True
    return best, False


def _check_samples(fam: MeasurementFamily, y: SampleVector) -> None:
    if y.family != fam:
        raise DomainError(f"samples belong to {y.family.describe()}, not {fam.describe()}")


def blasso_objective(
    fam: MeasurementFamily, mu: DiscreteMeasure, y: SampleVector, lam: float
) -> float:
    """``1/2 ||c(mu) - y||^2 + lambda ||mu||_TV``."""
    r = forward(mu, fam) - y
    return 0.5 * r.norm() ** 2 + lam * tv_norm(mu)


def residual_polynomial(
    fam: MeasurementFamily, mu: DiscreteMeasure, y: SampleVector, lam: float
) -> GeneralizedPolynomial:
    """``<y - c(mu), Phi> / lambda``, which has modulus one on the support at optimality."""
    r = y - forward(mu, fam)
    return GeneralizedPolynomial(fam, r.values / lam)


# ---------------------------------------------------------------------------
# Dual program and support
# ---------------------------------------------------------------------------


def solve_dual(fam: MeasurementFamily, y: SampleVector, cfg: SolverConfig) -> DualSolution:
    """Project ``y/lambda`` onto the grid-constrained dual set, then certify it."""
    _check_samples(fam, y)
    cfg.check_family(fam)
    nodes = scan_grid(fam, cfg.dual_grid)
    op = _Dictionary(fam, nodes, fft=fam.is_fourier)
    state, converged = _lasso(
        op,
        np.asarray(y.values),
        cfg.lam,
        start=np.zeros(nodes.size, dtype=np.complex128),
        max_iters=cfg.max_iters,
        tol=cfg.primal_dual_gap_tol,
    )
    if not converged:
        raise ConvergenceError(
            f"dual solve did not reach relative gap {cfg.primal_dual_gap_tol:g} "
            f"in {cfg.max_iters} iterations",
            last_gap=state.relative_gap,
            iterations=state.iterations,
        )
    P = GeneralizedPolynomial(fam, state.dual)
    lower, upper = sup_norm_certified(P, cfg.certify_grid)
    slack = max(0.0, upper - 1.0)
    logger.info(
        "dual solve: %d iterations, relative gap %.3g, %d active nodes, slack %.3g",
        state.iterations,
        state.relative_gap,
        int(np.count_nonzero(state.weights)),
        slack,
    )
    return DualSolution(
        polynomial=P,
        grid_nodes=nodes,
        grid_weights=state.weights,
        gap=state.relative_gap,
        iterations=state.iterations,
        sup_lower=lower,
        sup_upper=upper,
        feasibility_slack=slack,
    )


def _local_point(s: float, left: float, center: float, right: float) -> float:
    """Piecewise-linear map of ``s`` in [1, 3] onto ``[left, right]`` with 2 -> center."""
    if s < 2.0:
        return center + (s - 2.0) * (center - left)
    return center + (s - 2.0) * (right - center)


def _refine_peak(
    P: GeneralizedPolynomial, left: float, center: float, right: float, tol: float
) -> tuple[float, float]:
    """Golden-section maximization of ``|P|`` over ``[left, right]``."""
    domain = P.family.domain
    lo, hi = domain.bounds

    def point(s: float) -> float:
        x = _local_point(s, left, center, right)
        return x if P.family.is_fourier else min(max(x, lo), hi)

    def objective(s: float) -> float:
        return -abs(evaluate(P, point(s)))

    width = max(center - left, right - center)
    xtol = max(tol / (4.0 * width), 1e-12)
    try:
        res = minimize_scalar(
            objective, bracket=(1.0, 2.0, 3.0), method="golden", options={"xtol": xtol}
        )
    except ValueError:
        # ties at the bracket ends
        res = minimize_scalar(
            objective, bounds=(1.0, 3.0), method="bounded", options={"xatol": xtol}
        )
    s_best, value = float(res.x), -float(res.fun)
    center_value = abs(evaluate(P, center))
    if value < center_value:
        s_best, value = 2.0, center_value
    return domain.canonical(point(s_best)), value


def _grid_step_ratio(fam: MeasurementFamily, n: int) -> float:
    """Relative peak loss bound ``rho`` for a grid of ``n`` points."""
    step = 1.0 / n if fam.is_fourier else math.pi / (n - 1)
    return 0.5 * (0.5 * step * fam.angular_rate) ** 2


def _peaks(
    P: GeneralizedPolynomial, n: int, threshold: float, tol: float
) -> list[tuple[float, float]]:
    """Refined local maxima of ``|P|`` whose value reaches ``threshold``."""
    fam = P.family
    x, values = evaluate_grid(P, n)
    mod = np.abs(values)
    if fam.is_fourier:
        left, right = np.roll(mod, 1), np.roll(mod, -1)
    else:
        left = np.concatenate(([-np.inf], mod[:-1]))
        right = np.concatenate((mod[1:], [-np.inf]))
    prefilter = threshold * (1.0 - _grid_step_ratio(fam, n))
    candidates = np.flatnonzero((mod >= left) & (mod > right) & (mod >= prefilter))
    found: list[tuple[float, float]] = []
    for g in candidates:
        if fam.is_fourier:
            bracket = (x[g] - 1.0 / n, x[g], x[g] + 1.0 / n)
        elif g == 0:
            bracket = (x[0], x[0], x[1])
        elif g == n - 1:
            bracket = (x[n - 2], x[n - 1], x[n - 1])
        else:
            bracket = (x[g - 1], x[g], x[g + 1])
        if bracket[0] == bracket[1] or bracket[1] == bracket[2]:
            location, value = _refine_edge(P, bracket, tol)
        else:
            location, value = _refine_peak(P, *bracket, tol)
        if value >= threshold:
            found.append((location, value))
    return found


def _refine_edge(
    P: GeneralizedPolynomial, bracket: tuple[float, float, float], tol: float
) -> tuple[float, float]:
    """Bounded search in the cell next to a Chebyshev endpoint."""
    lo, hi = bracket[0], bracket[2]
    res = minimize_scalar(
        lambda t: -abs(evaluate(P, t)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": tol},
    )
    endpoint = bracket[1]
    best, value = float(res.x), -float(res.fun)
    edge_value = abs(evaluate(P, endpoint))
    if edge_value >= value:
        return endpoint, edge_value
    return best, value


def _merge(peaks: Sequence[tuple[float, float]], domain: Domain, radius: float) -> list[float]:
    """Collapse peaks closer than ``radius``, keeping the larger ``|P|``."""
    kept: list[tuple[float, float]] = []
    for location, value in sorted(peaks):
        if kept and float(domain.distance(kept[-1][0], location)) <= radius:
            if value > kept[-1][1]:
                kept[-1] = (location, value)
            continue
        kept.append((location, value))
    if len(kept) >= 2 and float(domain.distance(kept[0][0], kept[-1][0])) <= radius:
        first, last = kept[0], kept.pop()
        if last[1] > first[1]:
            kept[0] = last
    return sorted(location for location, _ in kept)


def extract_support(P: GeneralizedPolynomial, cfg: SolverConfig) -> list[float]:
    """Locations where ``|P|`` peaks within ``delta_sup`` of one."""
    peaks = _peaks(P, cfg.dual_grid, 1.0 - cfg.delta_sup, cfg.refine_tol)
    domain = P.family.domain
    support = _merge(peaks, domain, cfg.refine_tol * domain.length)
    logger.debug("extracted %d support points from %d peaks", len(support), len(peaks))
    return support


# ---------------------------------------------------------------------------
# Amplitudes
# ---------------------------------------------------------------------------


def _distinct(domain: Domain, locs: FloatArray) -> None:
    if locs.size < 2:
        return
    dist = domain.distance(locs[:, None], locs[None, :])
    np.fill_diagonal(dist, np.inf)
    if float(dist.min()) == 0.0:
        raise DomainError("support locations must be pairwise distinct")


def fit_amplitudes(
    fam: MeasurementFamily,
    support: Sequence[float] | FloatArray,
    y: SampleVector,
    lam: float,
    *,
    start: ComplexArray | None = None,
    max_iters: int = 20000,
    tol: float = _FIT_GAP_TOL,
) -> AmplitudeFit:
    """Complex LASSO over amplitudes with the positions held fixed."""
    _check_samples(fam, y)
    locs = np.asarray([fam.domain.canonical(float(t)) for t in support], dtype=np.float64)
    _distinct(fam.domain, locs)
    if locs.size == 0:
        zero = DiscreteMeasure.zero(fam.domain)
        return AmplitudeFit(
            measure=zero,
            objective=blasso_objective(fam, zero, y, lam),
            condition_number=1.0,
            ill_conditioned=False,
            iterations=0,
            converged=True,
        )
    op = _Dictionary(fam, locs)
    singular = scipy.linalg.svdvals(op.columns(np.arange(locs.size)))
    smallest = float(singular[-1]) if locs.size <= fam.size else 0.0
    condition = float(singular[0]) / smallest if smallest > 0 else math.inf
    ill = condition > ILL_CONDITIONED
    if ill:
        logger.warning(
            "amplitude fit on %d atoms is ill-conditioned (condition number %.3g)",
            locs.size,
            condition,
        )
    initial = (
        np.zeros(locs.size, dtype=np.complex128)
        if start is None
        else np.asarray(start, dtype=np.complex128)
    )
    state, converged = _lasso(
        op, np.asarray(y.values), lam, start=initial, max_iters=max_iters, tol=tol
    )
    if not converged:
        logger.warning(
            "amplitude fit stopped at relative gap %.3g after %d iterations",
            state.relative_gap,
            state.iterations,
        )
    keep = np.abs(state.weights) >= AMPLITUDE_FLOOR
    mu = DiscreteMeasure.from_weights(fam.domain, locs[keep], state.weights[keep])
    return AmplitudeFit(
        measure=mu,
        objective=blasso_objective(fam, mu, y, lam),
        condition_number=condition,
        ill_conditioned=ill,
        iterations=state.iterations,
        converged=converged,
    )


def refit_unpenalized(
    fam: MeasurementFamily, mu: DiscreteMeasure, y: SampleVector
) -> DiscreteMeasure:
    """Least-squares amplitudes on the support of ``mu``, without the l1 penalty."""
    _check_samples(fam, y)
    if len(mu) == 0:
        return mu
    cols = fam.basis(mu.locations).T
    weights, *_ = scipy.linalg.lstsq(cols, np.asarray(y.values))
    keep = np.abs(weights) >= AMPLITUDE_FLOOR
    return DiscreteMeasure.from_weights(fam.domain, mu.locations[keep], weights[keep])


# ---------------------------------------------------------------------------
# Support exchange
# ---------------------------------------------------------------------------


def _grid_steps(fam: MeasurementFamily, a: FloatArray, b: float, n: int) -> FloatArray:
    """Distance from each of ``a`` to ``b`` in units of the scan grid step."""
    if fam.is_fourier:
        return np.asarray(fam.domain.distance(a, b), dtype=np.float64) * n
    angles = np.arccos(np.clip(a, -1.0, 1.0))
    return np.abs(angles - math.acos(min(max(b, -1.0), 1.0))) * (n - 1) / math.pi


def _move(domain: Domain, x: FloatArray, target: FloatArray, step: float) -> FloatArray:
    if domain.kind is DomainKind.CIRCLE:
        diff = np.mod(target - x + 0.5, 1.0) - 0.5
        return np.asarray(np.mod(x + step * diff, 1.0), dtype=np.float64)
    return np.asarray(np.clip(x + step * (target - x), -1.0, 1.0), dtype=np.float64)


def _dedupe(
    domain: Domain, locs: FloatArray, weights: ComplexArray, radius: float
) -> tuple[FloatArray, ComplexArray]:
    """Fold atoms closer than ``radius`` into the first of them, summing weights."""
    out_x: list[float] = []
    out_w: list[complex] = []
    for x, w in zip(locs, weights, strict=True):
        x = domain.canonical(float(x))
        for i, kept in enumerate(out_x):
            if float(domain.distance(kept, x)) <= radius:
                out_w[i] += complex(w)
                break
        else:
            out_x.append(x)
            out_w.append(complex(w))
    return np.asarray(out_x, dtype=np.float64), np.asarray(out_w, dtype=np.complex128)


def _exchange_step(
    fam: MeasurementFamily, y: SampleVector, cfg: SolverConfig, fit: AmplitudeFit
) -> AmplitudeFit | None:
    """Slide atoms toward the peaks of the residual polynomial and add violated peaks.

    Moves are halved until the objective decreases; ``None`` when no move helps.
    """
    mu = fit.measure
    eta = residual_polynomial(fam, mu, y, cfg.lam)
    n = cfg.dual_grid
    peaks = _peaks(eta, n, 1.0 - cfg.delta_sup, cfg.refine_tol)
    locs = mu.locations
    targets = locs.copy()
    fresh: list[float] = []
    for location, value in peaks:
        steps = _grid_steps(fam, locs, location, n) if locs.size else np.array([np.inf])
        nearest = int(np.argmin(steps))
        if steps[nearest] <= _EXCHANGE_REACH:
            current = abs(evaluate(eta, float(targets[nearest])))
            if targets[nearest] == locs[nearest] or value > current:
                targets[nearest] = location
        elif value > 1.0 + cfg.optimality_tol / 8.0:
            fresh.append(location)
    fresh_arr = np.asarray(fresh, dtype=np.float64)
    radius = cfg.refine_tol * fam.domain.length
    for step in _BACKTRACK_STEPS:
        moved = _move(fam.domain, locs, targets, step)
        trial_x, trial_w = _dedupe(
            fam.domain,
            np.concatenate((moved, fresh_arr)),
            np.concatenate((mu.weights, np.zeros(fresh_arr.size, dtype=np.complex128))),
            radius,
        )
        trial = fit_amplitudes(
            fam, trial_x, y, cfg.lam, start=trial_w, max_iters=cfg.max_iters
        )
        if trial.objective < fit.objective - 1e-15 * max(1.0, abs(fit.objective)):
            logger.debug(
                "exchange: step %.4g, %d atoms (+%d new), objective %.15g",
                step,
                len(trial.measure),
                fresh_arr.size,
                trial.objective,
            )
            return trial
    return None


# ---------------------------------------------------------------------------
# Solve and checks
# ---------------------------------------------------------------------------


def check_optimality(
    fam: MeasurementFamily,
    measure: DiscreteMeasure,
    y: SampleVector,
    lam: float,
    tol: float,
    *,
    grid_size: int | None = None,
) -> OptimalityReport:
    """Certified bound on ``||<c(mu) - y, Phi>||_inf`` and the pairing condition."""
    _check_samples(fam, y)
    c = forward(measure, fam)
    grid = grid_size if grid_size is not None else 1024 * fam.size
    lower, upper = sup_norm_certified((c - y).as_polynomial(), grid)
    inner = complex(np.vdot((y - c).values, c.values))
    target = lam * tv_norm(measure)
    scale = max(abs(inner), target)
    cond2 = abs(inner - target) / scale if scale > 0 else 0.0
    passed = upper <= lam * (1.0 + tol) and cond2 <= tol
    return OptimalityReport(
        cond1_value=upper,
        cond1_lower=lower,
        cond2_residual=cond2,
        lam=lam,
        tol=tol,
        passed=passed,
    )


def solve(fam: MeasurementFamily, y: SampleVector, cfg: SolverConfig) -> SolveResult:
    """Solve the BLASSO and certify the returned measure."""
    dual = solve_dual(fam, y, cfg)
    support = extract_support(dual.polynomial, cfg)
    fit = fit_amplitudes(fam, support, y, cfg.lam, max_iters=cfg.max_iters)
    target = 1.0 + cfg.optimality_tol / 4.0
    rounds = 0
    while rounds < cfg.max_exchange_rounds:
        eta = residual_polynomial(fam, fit.measure, y, cfg.lam)
        _, upper = sup_norm_certified(eta, cfg.certify_grid)
        if upper <= target:
            break
        rounds += 1
        improved = _exchange_step(fam, y, cfg, fit)
        if improved is None:
            logger.warning(
                "support exchange stalled after %d rounds at ||eta|| <= %.9g", rounds, upper
            )
            break
        fit = improved
    mu = fit.measure

    eta = residual_polynomial(fam, mu, y, cfg.lam)
    lower, upper = sup_norm_certified(eta, cfg.certify_grid)
    scale = max(1.0, lower)
    dual_coefficients = GeneralizedPolynomial(fam, eta.coefficients / scale)
    slack = max(0.0, upper / scale - 1.0)
    a_feasible = dual_coefficients.coefficients / (1.0 + slack)
    dual_value = 0.5 * y.norm() ** 2 - 0.5 * float(
        np.linalg.norm(y.values - cfg.lam * a_feasible) ** 2
    )
    objective = fit.objective

    cardinality_ok = len(mu) <= fam.size + 1
    if not cardinality_ok:
        logger.warning(
            "solution has %d atoms, more than %d for %s", len(mu), fam.size + 1, fam.describe()
        )
    optimality = check_optimality(
        fam, mu, y, cfg.lam, cfg.optimality_tol, grid_size=cfg.certify_grid
    )
    logger.info(
        "solve: %d atoms, objective %.12g, gap %.3g, %d exchange rounds, optimality %s",
        len(mu),
        objective,
        objective - dual_value,
        rounds,
        "passed" if optimality.passed else "FAILED",
    )
    return SolveResult(
        measure=mu,
        dual_coefficients=dual_coefficients,
        objective=objective,
        gap=max(objective - dual_value, 0.0),
        optimality=optimality,
        lam=cfg.lam,
        lam_effective=cfg.lam / (1.0 + slack),
        feasibility_slack=slack,
        dual_iterations=dual.iterations,
        exchange_rounds=rounds,
        amplitude_condition=fit.condition_number,
        ill_conditioned=fit.ill_conditioned,
        cardinality_ok=cardinality_ok,
        debiased=refit_unpenalized(fam, mu, y) if cfg.debias else None,
    )


def grid_lasso_oracle(
    fam: MeasurementFamily,
    y: SampleVector,
    lam: float,
    grid_size: int,
    tol: float,
    *,
    max_iters: int = 50000,
) -> OracleResult:
    """Brute-force LASSO with atoms at every node of a fine grid."""
    _check_samples(fam, y)
    if grid_size < MIN_ORACLE_GRID_FACTOR * fam.size:
        raise DomainError(
            f"oracle grid of {grid_size} points is below "
            f"{MIN_ORACLE_GRID_FACTOR} x {fam.size} for {fam.describe()}"
        )
    nodes = scan_grid(fam, grid_size)
    op = _Dictionary(fam, nodes, fft=fam.is_fourier)
    state, converged = _lasso(
        op,
        np.asarray(y.values),
        lam,
        start=np.zeros(grid_size, dtype=np.complex128),
        max_iters=max_iters,
        tol=tol,
    )
    if not converged:
        raise ConvergenceError(
            f"grid oracle did not reach relative gap {tol:g} in {max_iters} iterations",
            last_gap=state.relative_gap,
            iterations=state.iterations,
        )
    keep = np.abs(state.weights) > 0
    mu = DiscreteMeasure.from_weights(fam.domain, nodes[keep], state.weights[keep])
    return OracleResult(
        measure=mu,
        objective=blasso_objective(fam, mu, y, lam),
        gap=state.relative_gap,
        iterations=state.iterations,
    )


# ---------------------------------------------------------------------------
# Derived runs
# ---------------------------------------------------------------------------


def solve_gme(
    fam: MeasurementFamily,
    y: SampleVector,
    *,
    lam_ratio: float = 1e-6,
    settings: SolverSettings | None = None,
) -> SolveResult:
    """Generalized minimal extrapolation as the small-lambda limit of the BLASSO."""
    if lam_ratio <= 0:
        raise DomainError(f"lam_ratio must be positive, got {lam_ratio!r}")
    norm = y.norm()
    lam = lam_ratio * norm if norm > 0 else lam_ratio
    return solve(fam, y, SolverConfig.for_family(fam, lam, settings))


def prediction_bound_check(
    fam: MeasurementFamily,
    truth: DiscreteMeasure,
    result: SolveResult,
    noise: SampleVector,
    lam: float,
    *,
    grid_size: int | None = None,
) -> PredictionCheck:
    grid = grid_size if grid_size is not None else 64 * fam.size
    E = (forward(result.measure, fam) - forward(truth, fam)).as_polynomial()
    e_lower, e_upper = sup_norm_certified(E, grid)
    norms = noise_norms(fam, noise, grid)
    slack = lam + norms.lambda0_upper - e_upper
    return PredictionCheck(
        e_lower=e_lower,
        e_upper=e_upper,
        lambda0_lower=norms.lambda0_lower,
        lambda0_upper=norms.lambda0_upper,
        lam=lam,
        slack=slack,
        holds=slack >= 0.0,
    )


def lambda_path(
    fam: MeasurementFamily,
    y: SampleVector,
    lams: Sequence[float],
    settings: SolverSettings | None = None,
) -> list[PathPoint]:
    """Solve along a sequence of lambdas, in the order given."""
    points: list[PathPoint] = []
    for lam in lams:
        res = solve(fam, y, SolverConfig.for_family(fam, float(lam), settings))
        points.append(
            PathPoint(
                lam=float(lam),
                tv=tv_norm(res.measure),
                objective=res.objective,
                support_size=len(res.measure),
                passed=res.optimality.passed,
            )
        )
    return points
