from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import integrate
from scipy import optimize

from wbinfer.config import MonteCarloParams
from wbinfer.config import SaParams
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.prs import coverage_need
from wbinfer.prs import interval_noncoverage
from wbinfer.prs import level_values
from wbinfer.prs import noncoverage_at_index
from wbinfer.prs import sample_centers
from wbinfer.prs import sample_inner
from wbinfer.specfun import FloatArray
from wbinfer.specfun import RngStream
from wbinfer.types import binomial_se

logger = logging.getLogger(__name__)

KL_OMEGA_MARGIN = 5.0
HIER_LOG10_BOUNDS = (-3.0, 3.0)
_BOUNDARY_EPS = 1e-9
_LOG_EVERY = 100
_WARM_START_POINTS = 17
# grid cells on each side of the crossing used for the slope secant
_SLOPE_SPAN = 2
_SLOPE_GAIN = 1.5
_MAX_GAIN_WIDTHS = 25.0


@dataclass(frozen=True)
class CredibilityEstimate:
    omega: float
    alpha: float
    phi_hat: float
    std_err: float
    outer_draws: int
    inner_draws: int


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    omega: float
    phi_hat: float


@dataclass(frozen=True)
class CalibrationResult:
    family: PrsFamily
    alpha: float
    omega_star: float
    converged: bool
    final_phi: CredibilityEstimate
    tolerance: float
    trajectory: tuple[TrajectoryPoint, ...] = field(default=(), repr=False)

    @property
    def calibrated_family(self) -> PrsFamily:
        return self.family.with_omega(self.omega_star)


@dataclass(frozen=True)
class SearchBox:
    """Clamped search interval for omega, optionally on a log10 scale."""

    lower: float
    upper: float
    log_scale: bool = False

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_omega(self, x: float) -> float:
        return 10.0**x if self.log_scale else x

    def from_omega(self, omega: float) -> float:
        return math.log10(omega) if self.log_scale else omega

    def clamp(self, x: float) -> float:
        return min(max(x, self.lower), self.upper)

    def at_boundary(self, x: float) -> bool:
        return x - self.lower <= _BOUNDARY_EPS or self.upper - x <= _BOUNDARY_EPS


def search_box(family: PrsFamily) -> SearchBox:
    match family.kind:
        case PrsKind.POINT | PrsKind.VACUOUS | PrsKind.INTERVAL | PrsKind.RECTANGLE:
            return SearchBox(0.0, 1.0)
        case PrsKind.KL_BALL:
            return SearchBox(0.0, math.log(family.n) + KL_OMEGA_MARGIN)
        case PrsKind.BETA_BOX_HIER:
            if family.fixed_z is not None:
                raise ConfigurationError("a fixed-z hierarchical family has no free index to calibrate")
            return SearchBox(*HIER_LOG10_BOUNDS, log_scale=True)
    raise DomainError(f"unsupported PRS kind: {family.kind}")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def noncoverage_table(
    family: PrsFamily, omegas: Sequence[float], outer: int, inner: int, rng: RngStream
) -> FloatArray:
    """Q_omega(U*_k) for every omega (rows) and outer draw U*_k (columns).

    All rows share the outer draws and the inner draws, so each column is nonincreasing in omega
    whenever the family is nested.
    """
    targets = sample_centers(family, rng.child(0), outer)
    if family.has_closed_form:
        return np.vstack([interval_noncoverage(family.with_omega(w).effective_omega, targets[:, 0]) for w in omegas])
    sample = sample_inner(family, rng.child(1), inner)
    if len(omegas) == 1:
        return noncoverage_at_index(family.with_omega(omegas[0]), sample, targets)[None, :]
    need = coverage_need(family, sample.centers, targets)
    rows = []
    for omega in omegas:
        member = family.with_omega(omega)
        index = level_values(member, sample)
        rows.append(np.mean(index[:, None] < need, axis=0))
    return np.vstack(rows)


def _estimate(q: FloatArray, omega: float, alpha: float, inner: int) -> CredibilityEstimate:
    # Q is a fraction of inner draws, so compare against 1 - alpha with a rounding allowance
    hits = q >= (1.0 - alpha) - 1e-12
    phi = float(np.mean(hits))
    return CredibilityEstimate(
        omega=omega,
        alpha=alpha,
        phi_hat=phi,
        std_err=binomial_se(phi, q.size),
        outer_draws=int(q.size),
        inner_draws=inner,
    )


def phi_alpha(family: PrsFamily, alpha: float, mc: MonteCarloParams, rng: RngStream) -> CredibilityEstimate:
    """phi_alpha(omega) = mu{U*: Q_omega(U*) >= 1 - alpha}; hierarchical families use the mixture Q-bar."""
    _check_alpha(alpha)
    inner = 0 if family.has_closed_form else mc.inner
    q = noncoverage_table(family, [family.effective_omega], mc.outer, mc.inner, rng)[0]
    return _estimate(q, family.effective_omega, alpha, inner)


def credibility_curve(
    family: PrsFamily, omegas: Sequence[float], alpha: float, mc: MonteCarloParams, rng: RngStream
) -> list[CredibilityEstimate]:
    _check_alpha(alpha)
    if len(omegas) == 0:
        raise ConfigurationError("credibility curve needs a nonempty omega grid")
    inner = 0 if family.has_closed_form else mc.inner
    table = noncoverage_table(family, omegas, mc.outer, mc.inner, rng)
    return [_estimate(row, float(omega), alpha, inner) for omega, row in zip(omegas, table)]


def is_as_efficient(
    family: PrsFamily,
    omega: float,
    omega_prime: float,
    alphas: Sequence[float],
    mc: MonteCarloParams,
    rng: RngStream,
) -> bool:
    """Whether S_omega is as efficient as S_omega' : phi_alpha(omega) >= phi_alpha(omega') at every alpha."""
    table = noncoverage_table(family, [omega, omega_prime], mc.outer, mc.inner, rng)
    for alpha in alphas:
        _check_alpha(alpha)
        if np.mean(table[0] >= 1.0 - alpha) < np.mean(table[1] >= 1.0 - alpha):
            return False
    return True


@dataclass(frozen=True)
class WarmStart:
    """Initial iterate and the secant slope of phi around it, on the search-box scale."""

    x: float
    slope: float | None = None


def _warm_start(family: PrsFamily, alpha: float, box: SearchBox, sa: SaParams, rng: RngStream) -> WarmStart:
    """Coarse credibility scan: the interpolated first grid crossing of alpha and the local slope."""
    grid = np.linspace(box.lower, box.upper, _WARM_START_POINTS)
    omegas = [box.to_omega(float(g)) for g in grid]
    table = noncoverage_table(family.with_omega(omegas[0]), omegas, 5 * sa.batch, sa.inner_early, rng)
    phis = np.mean(table >= (1.0 - alpha) - 1e-12, axis=1)
    below = np.flatnonzero(phis <= alpha)
    if below.size == 0:
        return WarmStart(box.upper)
    i = int(below[0])
    if i == 0:
        return WarmStart(box.lower)
    hi, lo = phis[i - 1], phis[i]
    weight = (hi - alpha) / (hi - lo) if hi > lo else 0.5
    x = float(grid[i - 1] + weight * (grid[i] - grid[i - 1]))
    left, right = max(i - 1 - _SLOPE_SPAN, 0), min(i + _SLOPE_SPAN, grid.size - 1)
    slope = float((phis[right] - phis[left]) / (grid[right] - grid[left]))
    return WarmStart(x, slope if slope < 0.0 else None)


def sa_gain(box: SearchBox, sa: SaParams, slope: float | None = None) -> float:
    """Robbins-Monro constant c.

    An explicit ``sa.c`` wins. Otherwise c = 1.5 / |phi'| from the scan slope, kept within
    [2, 25] box widths; without a slope it is twice the box width.
    """
    if sa.c is not None:
        return sa.c
    floor = 2.0 * box.width
    if slope is None:
        return floor
    return min(max(_SLOPE_GAIN / abs(slope), floor), _MAX_GAIN_WIDTHS * box.width)


def solve_mb(family: PrsFamily, alpha: float, sa: SaParams, rng: RngStream) -> CalibrationResult:
    """Solve phi_alpha(omega) = alpha by Robbins-Monro iteration.

    phi_alpha is nonincreasing in omega, so the step ``+a_t (phi_hat - alpha)`` moves toward the root.
    The returned omega is the average of the trailing iterates; it only counts as converged when a
    fresh re-estimate of phi lies within ``sa.tolerance`` of alpha and the root is not on the clamp.
    """
    _check_alpha(alpha)
    box = search_box(family)
    if sa.warm_start:
        start = _warm_start(family, alpha, box, sa, rng.child(sa.max_iters + 1))
    else:
        start = WarmStart(box.lower + 0.5 * box.width)
    x = start.x
    gain = sa_gain(box, sa, start.slope)
    logger.debug("sa start: omega=%.6g gain=%.4g", box.to_omega(x), gain)
    trajectory: list[TrajectoryPoint] = []
    iterates: list[float] = []

    for t in range(sa.max_iters):
        inner = sa.inner_at(t)
        member = family.with_omega(box.to_omega(x))
        q = noncoverage_table(member, [member.effective_omega], sa.batch, inner, rng.child(t))[0]
        phi_hat = float(np.mean(q >= (1.0 - alpha) - 1e-12))
        trajectory.append(TrajectoryPoint(iteration=t, omega=box.to_omega(x), phi_hat=phi_hat))
        x = box.clamp(x + gain / (t + sa.t0) * (phi_hat - alpha))
        iterates.append(x)
        if t % _LOG_EVERY == 0:
            logger.debug("sa step %d: omega=%.6g phi_hat=%.4f", t, box.to_omega(x), phi_hat)

    tail = max(1, int(math.ceil(sa.tail_fraction * len(iterates))))
    x_bar = float(np.mean(iterates[-tail:]))
    omega_star = box.to_omega(x_bar)
    recheck = phi_alpha(
        family.with_omega(omega_star),
        alpha,
        MonteCarloParams(inner=sa.inner_late, outer=sa.recheck_outer),
        rng.child(sa.max_iters),
    )
    converged = abs(recheck.phi_hat - alpha) <= sa.tolerance and not box.at_boundary(x_bar)
    logger.info(
        "calibrated %s (n=%d) at alpha=%.3g: omega=%.6g phi=%.4f converged=%s",
        family.kind,
        family.n,
        alpha,
        omega_star,
        recheck.phi_hat,
        converged,
    )
    return CalibrationResult(
        family=family,
        alpha=alpha,
        omega_star=omega_star,
        converged=converged,
        final_phi=recheck,
        tolerance=sa.tolerance,
        trajectory=tuple(trajectory),
    )


def credibility_oracle_interval(alpha: float, omega: float) -> float:
    """phi_alpha(omega) for the interval family by adaptive quadrature of the closed-form Q."""
    _check_alpha(alpha)
    if omega >= 1.0:
        return 0.0

    def indicator(u: float) -> float:
        return float(interval_noncoverage(omega, u) >= 1.0 - alpha)

    breaks = sorted({alpha * (1.0 - omega), 1.0 - alpha * (1.0 - omega), omega, 1.0 - omega})
    value, _ = integrate.quad(indicator, 0.0, 1.0, points=[b for b in breaks if 0.0 < b < 1.0], limit=200)
    return float(value)


def oracle_root_interval(alpha: float, xtol: float = 1e-10) -> float:
    """Root of phi_alpha(omega) = alpha for the interval family by bracketed bisection on the oracle."""
    return float(optimize.brentq(lambda w: credibility_oracle_interval(alpha, w) - alpha, 0.0, 1.0, xtol=xtol))
