"""Predictive random set families.

Every family is reduced to a *coverage need*: for a center ``c`` and a target ``u``, the smallest
value of the family's size index at which ``S(c)`` contains ``u``. The size index is ``omega`` for the
interval, rectangle and KL-ball families and the level ``z`` for the hierarchical beta boxes, so
membership is always ``index >= need`` and nesting in ``omega`` follows directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import replace
from enum import StrEnum

import numpy as np
from more_itertools import sliced
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import special

from wbinfer.config import MonteCarloParams
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.specfun import FloatArray
from wbinfer.specfun import RngStream
from wbinfer.specfun import sample_gamma
from wbinfer.specfun import sample_ordered_uniforms
from wbinfer.specfun import sample_uniform_simplex
from wbinfer.types import ProbabilityEstimate

SIMPLEX_TOLERANCE = 1e-9
Z_FLOOR = 0.5

# elements of draw-by-target work evaluated per chunk
_CHUNK_ELEMENTS = 4_000_000


class PrsKind(StrEnum):
    POINT = "point"
    VACUOUS = "vacuous"
    INTERVAL = "interval"
    RECTANGLE = "rectangle"
    KL_BALL = "kl-ball"
    BETA_BOX_HIER = "beta-box-hier"


_UNIT_INDEXED = (PrsKind.POINT, PrsKind.VACUOUS, PrsKind.INTERVAL, PrsKind.RECTANGLE)
_ONE_DIMENSIONAL = (PrsKind.POINT, PrsKind.VACUOUS, PrsKind.INTERVAL)


@dataclass(frozen=True)
class PrsFamily:
    """A member ``S_omega`` of an indexed PRS family over an auxiliary space of dimension ``n``.

    ``point`` and ``vacuous`` are the interval family pinned at omega 0 and 1. ``fixed_z`` replaces the
    Beta(omega, 1) level of the hierarchical family by a point mass.
    """

    kind: PrsKind
    n: int = 1
    omega: float = 0.0
    fixed_z: float | None = None

    def __post_init__(self) -> None:
        if self.kind in _ONE_DIMENSIONAL and self.n != 1:
            raise DomainError(f"{self.kind} family is one-dimensional, got n={self.n}")
        if self.n < (2 if self.kind == PrsKind.KL_BALL else 1):
            raise DomainError(f"invalid dimension n={self.n} for {self.kind}")
        if math.isnan(self.omega) or self.omega < 0.0:
            raise DomainError(f"omega must be nonnegative, got {self.omega}")
        if self.kind in _UNIT_INDEXED and self.omega > 1.0:
            raise DomainError(f"omega for {self.kind} must lie in [0, 1], got {self.omega}")
        if self.fixed_z is not None:
            if self.kind != PrsKind.BETA_BOX_HIER:
                raise DomainError("fixed_z only applies to the hierarchical beta-box family")
            if not Z_FLOOR <= self.fixed_z <= 1.0:
                raise DomainError(f"fixed_z must lie in [0.5, 1], got {self.fixed_z}")

    @property
    def effective_omega(self) -> float:
        match self.kind:
            case PrsKind.POINT:
                return 0.0
            case PrsKind.VACUOUS:
                return 1.0
        return self.omega

    @property
    def dimension(self) -> int:
        """Dimension of a point of the auxiliary space; the KL-ball space carries R in front of P."""
        return self.n + 1 if self.kind == PrsKind.KL_BALL else self.n

    @property
    def is_vacuous(self) -> bool:
        if self.kind in _UNIT_INDEXED:
            return self.effective_omega >= 1.0
        if self.fixed_z is not None:
            return self.fixed_z >= 1.0
        return math.isinf(self.omega)

    @property
    def has_closed_form(self) -> bool:
        return self.kind in _ONE_DIMENSIONAL

    def with_omega(self, omega: float) -> PrsFamily:
        if self.kind in (PrsKind.POINT, PrsKind.VACUOUS):
            return replace(self, kind=PrsKind.INTERVAL, omega=omega)
        return replace(self, omega=omega)


@dataclass(frozen=True)
class PrsDraw:
    family: PrsFamily
    center: FloatArray
    z: float | None = None

    @property
    def index(self) -> float:
        return self.z if self.z is not None else self.family.effective_omega

    def box(self) -> tuple[FloatArray, FloatArray]:
        """Per-coordinate endpoints of a box-shaped draw, in the auxiliary space."""
        match self.family.kind:
            case PrsKind.KL_BALL:
                raise DomainError("a KL-ball draw is not a box")
            case PrsKind.BETA_BOX_HIER:
                p = order_statistic_scores(self.center)
                i, b = order_statistic_shapes(self.family.n)
                z = self.index
                return (
                    np.asarray(special.betaincinv(i, b, p - z * p)),
                    np.asarray(special.betaincinv(i, b, p + z * (1.0 - p))),
                )
        omega = self.index
        return self.center - omega * self.center, self.center + omega * (1.0 - self.center)


@dataclass(frozen=True)
class InnerSample:
    """Joint draws from the pivotal measure (and, for hierarchical families, the level uniforms)."""

    centers: FloatArray
    levels: FloatArray | None = None

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])


def order_statistic_shapes(n: int) -> tuple[FloatArray, FloatArray]:
    i = np.arange(1, n + 1, dtype=np.float64)
    return i, n + 1.0 - i


def order_statistic_scores(ordered: ArrayLike) -> FloatArray:
    """p_i = pBeta(u_(i) | i, n - i + 1) along the last axis."""
    values = np.asarray(ordered, dtype=np.float64)
    i, b = order_statistic_shapes(values.shape[-1])
    return np.asarray(special.betainc(i, b, np.clip(values, 0.0, 1.0)), dtype=np.float64)


def hierarchical_levels(omega: float, uniforms: FloatArray) -> FloatArray:
    """Z = (1 + V) / 2 with V ~ Beta(omega, 1), by inversion V = W^(1/omega) so levels nest in omega."""
    if math.isinf(omega):
        return np.ones_like(uniforms)
    if omega == 0.0:
        return np.full_like(uniforms, Z_FLOOR)
    return 0.5 * (1.0 + uniforms ** (1.0 / omega))


def level_values(family: PrsFamily, sample: InnerSample) -> FloatArray:
    """Size index of every draw in ``sample``."""
    if family.kind != PrsKind.BETA_BOX_HIER:
        return np.full(sample.size, family.effective_omega)
    if family.fixed_z is not None:
        return np.full(sample.size, family.fixed_z)
    assert sample.levels is not None
    return hierarchical_levels(family.omega, sample.levels)


def sample_centers(family: PrsFamily, rng: RngStream, size: int) -> FloatArray:
    """Draws from the pivotal measure, shape ``(size, dimension)``."""
    match family.kind:
        case PrsKind.POINT | PrsKind.VACUOUS | PrsKind.INTERVAL:
            return rng.uniform((size, 1))
        case PrsKind.RECTANGLE | PrsKind.BETA_BOX_HIER:
            return sample_ordered_uniforms(family.n, rng, size)
        case PrsKind.KL_BALL:
            radius = sample_gamma(float(family.n), rng, size=size)
            simplex = sample_uniform_simplex(family.n, rng, size)
            return np.column_stack([radius, simplex])
    raise DomainError(f"unsupported PRS kind: {family.kind}")


def sample_inner(family: PrsFamily, rng: RngStream, size: int) -> InnerSample:
    centers = sample_centers(family, rng, size)
    levels = rng.uniform(size) if family.kind == PrsKind.BETA_BOX_HIER else None
    return InnerSample(centers=centers, levels=levels)


def draw(family: PrsFamily, rng: RngStream) -> PrsDraw:
    sample = sample_inner(family, rng, 1)
    z = float(level_values(family, sample)[0]) if family.kind == PrsKind.BETA_BOX_HIER else None
    return PrsDraw(family=family, center=sample.centers[0], z=z)


def _check_simplex(p: FloatArray, name: str) -> None:
    if np.any(p < 0.0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOLERANCE):
        raise DomainError(f"{name} must lie on the probability simplex")


def kl_divergence(big_p: ArrayLike, p: ArrayLike) -> float:
    """K(P, p) = sum_i P_i log(P_i / p_i) with 0 log 0 = 0 and +inf when P_i > 0 = p_i."""
    big_p_values = np.asarray(big_p, dtype=np.float64)
    p_values = np.asarray(p, dtype=np.float64)
    if big_p_values.shape != p_values.shape or big_p_values.ndim != 1:
        raise DomainError("KL divergence needs two points on the same simplex")
    _check_simplex(big_p_values, "P")
    _check_simplex(p_values, "p")
    support = big_p_values > 0.0
    if np.any(p_values[support] == 0.0):
        return math.inf
    return max(float(np.sum(big_p_values[support] * np.log(big_p_values[support] / p_values[support]))), 0.0)


def kl_matrix(big_p: FloatArray, p: FloatArray) -> FloatArray:
    """K(P_j, p_k) for all rows of ``big_p`` (J x n) against all rows of ``p`` (K x n)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_big = np.where(big_p > 0.0, np.log(big_p), 0.0)
        log_p = np.log(p)
    entropy_term = np.sum(big_p * log_big, axis=1)
    finite_log_p = np.where(np.isfinite(log_p), log_p, 0.0)
    divergence = entropy_term[:, None] - big_p @ finite_log_p.T
    singular = (big_p > 0.0).astype(np.float64) @ (p == 0.0).astype(np.float64).T
    return np.where(singular > 0.0, np.inf, np.maximum(divergence, 0.0))


def _box_need(centers: FloatArray, targets: FloatArray) -> FloatArray:
    """Smallest omega with c_i - omega c_i <= u_i <= c_i + omega (1 - c_i) for all i; shape (J, K)."""
    rows = max(1, _CHUNK_ELEMENTS // max(1, targets.size))
    blocks = []
    for chunk in sliced(centers, rows):
        c = chunk[:, None, :]
        u = targets[None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            lower = np.where(c > 0.0, 1.0 - u / c, -np.inf)
            upper = np.where(c < 1.0, (u - c) / (1.0 - c), -np.inf)
        blocks.append(np.max(np.maximum(lower, upper), axis=2))
    return np.concatenate(blocks, axis=0)


def coverage_need(family: PrsFamily, centers: FloatArray, targets: FloatArray) -> FloatArray:
    """Matrix of coverage needs, draws along rows and targets along columns."""
    match family.kind:
        case PrsKind.KL_BALL:
            return kl_matrix(centers[:, 1:], targets[:, 1:])
        case PrsKind.BETA_BOX_HIER:
            return _box_need(order_statistic_scores(centers), order_statistic_scores(targets))
    return _box_need(centers, targets)


def _as_points(family: PrsFamily, u: ArrayLike) -> FloatArray:
    points = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if points.shape[-1] != family.dimension:
        raise DomainError(f"{family.kind} points have dimension {family.dimension}, got {points.shape[-1]}")
    if family.kind == PrsKind.KL_BALL:
        _check_simplex(points[:, 1:], "p")
    elif np.any((points < 0.0) | (points > 1.0)):
        raise DomainError(f"{family.kind} points must lie in the unit box")
    return points


def contains(prs_draw: PrsDraw, u: ArrayLike) -> bool:
    family = prs_draw.family
    target = _as_points(family, u)
    need = coverage_need(family, prs_draw.center[None, :], target)[0, 0]
    return bool(prs_draw.index >= need)


def interval_noncoverage(omega: float, u: ArrayLike) -> FloatArray:
    """Closed-form Q_omega(u) for the interval family [U - omega U, U + omega (1 - U)]."""
    values = np.asarray(u, dtype=np.float64)
    if omega >= 1.0:
        return np.zeros_like(values)
    upper = np.minimum(values / (1.0 - omega), 1.0)
    lower = np.maximum((values - omega) / (1.0 - omega), 0.0)
    return 1.0 - np.maximum(upper - lower, 0.0)


def noncoverage_from_need(family: PrsFamily, sample: InnerSample, need: FloatArray) -> FloatArray:
    """Fraction of draws in ``sample`` missing each target column of ``need``."""
    index = level_values(family, sample)
    return np.mean(index[:, None] < need, axis=0)


def box_bounds(family: PrsFamily, sample: InnerSample) -> tuple[FloatArray, FloatArray]:
    """Box endpoints of every draw at its own size index; order-statistic scores for beta boxes."""
    if family.kind == PrsKind.KL_BALL:
        raise DomainError("a KL-ball draw is not a box")
    centers = order_statistic_scores(sample.centers) if family.kind == PrsKind.BETA_BOX_HIER else sample.centers
    index = level_values(family, sample)[:, None]
    return centers - index * centers, centers + index * (1.0 - centers)


def box_coverage_counts(lower: FloatArray, upper: FloatArray, targets: FloatArray) -> NDArray[np.int64]:
    """Number of boxes (rows of ``lower``/``upper``) containing each row of ``targets``.

    Coordinates are checked one at a time on a boolean draws x targets mask, stopping once no pair
    is left, so nothing of size draws x targets x n is ever held.
    """
    counts = np.zeros(targets.shape[0], dtype=np.int64)
    rows = max(1, _CHUNK_ELEMENTS // max(1, targets.shape[0]))
    for lo, hi in zip(sliced(lower, rows), sliced(upper, rows)):
        alive = np.ones((lo.shape[0], targets.shape[0]), dtype=bool)
        inside = np.empty_like(alive)
        for i in range(targets.shape[1]):
            np.less_equal(lo[:, i, None], targets[None, :, i], out=inside)
            alive &= inside
            np.less_equal(targets[None, :, i], hi[:, i, None], out=inside)
            alive &= inside
            if not alive.any():
                break
        counts += alive.sum(axis=0)
    return counts


def noncoverage_at_index(family: PrsFamily, sample: InnerSample, targets: FloatArray) -> FloatArray:
    """Fraction of draws in ``sample`` missing each row of ``targets`` at the family's own omega."""
    if family.kind == PrsKind.KL_BALL:
        return noncoverage_from_need(family, sample, coverage_need(family, sample.centers, targets))
    if family.kind == PrsKind.BETA_BOX_HIER:
        targets = order_statistic_scores(targets)
    lower, upper = box_bounds(family, sample)
    covered = box_coverage_counts(lower, upper, targets)
    return (sample.size - covered) / sample.size


def noncoverage_many(family: PrsFamily, targets: FloatArray, mc: MonteCarloParams, rng: RngStream) -> FloatArray:
    """Q_omega at every row of ``targets``; closed form for one-dimensional families, else shared inner draws."""
    if family.has_closed_form:
        return interval_noncoverage(family.effective_omega, targets[:, 0])
    if family.is_vacuous:
        return np.zeros(targets.shape[0])
    sample = sample_inner(family, rng, mc.inner)
    return noncoverage_at_index(family, sample, targets)


def noncoverage(family: PrsFamily, u: ArrayLike, mc: MonteCarloParams, rng: RngStream) -> ProbabilityEstimate:
    target = _as_points(family, u)[:1]
    if family.has_closed_form:
        return ProbabilityEstimate.exact(float(interval_noncoverage(family.effective_omega, target[0, 0])))
    if family.kind == PrsKind.BETA_BOX_HIER:
        return mixture_noncoverage(family, u, mc, rng)
    q = float(noncoverage_many(family, target, mc, rng)[0])
    return ProbabilityEstimate.from_count(round(q * mc.inner), mc.inner)


def mixture_noncoverage(family: PrsFamily, u: ArrayLike, mc: MonteCarloParams, rng: RngStream) -> ProbabilityEstimate:
    """Q-bar_omega(u): noncoverage averaged over the level distribution, by joint sampling of (U, Z)."""
    if family.kind != PrsKind.BETA_BOX_HIER:
        raise ConfigurationError(f"mixture noncoverage needs the hierarchical family, got {family.kind}")
    target = _as_points(family, u)[:1]
    q = float(noncoverage_many(family, target, mc, rng)[0])
    return ProbabilityEstimate.from_count(round(q * mc.inner), mc.inner)
