from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike

from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.prs import kl_divergence
from wbinfer.specfun import FloatArray
from wbinfer.specfun import RngStream
from wbinfer.specfun import sample_ordered_uniforms
from wbinfer.specfun import sample_uniform_simplex
from wbinfer.types import Distribution
from wbinfer.types import ModelTag
from wbinfer.types import ObservedData
from wbinfer.types import binomial_se

if TYPE_CHECKING:
    from wbinfer.io import NullDistributionCache

logger = logging.getLogger(__name__)

DEFAULT_NULL_REPS = 10_000
MIN_NULL_REPS = 1_000


class Statistic(StrEnum):
    LR = "lr"
    KS = "ks"
    AD = "ad"
    CVM = "cvm"


GOODNESS_OF_FIT = (Statistic.KS, Statistic.AD, Statistic.CVM)


@dataclass(frozen=True)
class TestResult:
    """Outcome of a baseline test; every statistic rejects for large values."""

    __test__ = False

    statistic: float
    critical_value: float
    p_value: float
    p_value_se: float
    reject: bool
    reps_used: int


def lr_statistic(x: ArrayLike) -> float:
    """-log of the likelihood ratio for equal rates: n K(u_n, P_hat(1_n))."""
    values = ObservedData(ModelTag.HOMOGENEITY, np.asarray(x, dtype=np.float64)).observations
    n = values.size
    return n * kl_divergence(np.full(n, 1.0 / n), values / values.sum())


def lr_statistics(p: FloatArray) -> FloatArray:
    """n K(u_n, p) for each row of simplex points: -n log n - sum_i log p_i."""
    n = p.shape[-1]
    with np.errstate(divide="ignore"):
        return -n * np.log(n) - np.sum(np.log(p), axis=-1)


def ks_from_scores(t: FloatArray) -> FloatArray:
    n = t.shape[-1]
    i = np.arange(1, n + 1)
    return np.max(np.maximum(i / n - t, t - (i - 1) / n), axis=-1)


def cvm_from_scores(t: FloatArray) -> FloatArray:
    n = t.shape[-1]
    i = np.arange(1, n + 1)
    return 1.0 / (12.0 * n) + np.sum((t - (2 * i - 1) / (2.0 * n)) ** 2, axis=-1)


def ad_from_scores(t: FloatArray) -> FloatArray:
    n = t.shape[-1]
    i = np.arange(1, n + 1)
    with np.errstate(divide="ignore"):
        terms = (2 * i - 1) * (np.log(t) + np.log1p(-t[..., ::-1]))
    return -n - np.sum(terms, axis=-1) / n


_FROM_SCORES = {
    Statistic.KS: ks_from_scores,
    Statistic.AD: ad_from_scores,
    Statistic.CVM: cvm_from_scores,
}


def _scores(x: ArrayLike, f0: Distribution) -> FloatArray:
    values = ObservedData(ModelTag.ONESAMPLE, np.asarray(x, dtype=np.float64)).observations
    return f0.cdf(np.sort(values, kind="stable"))


def ks_statistic(x: ArrayLike, f0: Distribution) -> float:
    return float(ks_from_scores(_scores(x, f0)))


def ad_statistic(x: ArrayLike, f0: Distribution) -> float:
    return float(ad_from_scores(_scores(x, f0)))


def cvm_statistic(x: ArrayLike, f0: Distribution) -> float:
    return float(cvm_from_scores(_scores(x, f0)))


def gof_statistic(statistic: Statistic, x: ArrayLike, f0: Distribution) -> float:
    if statistic not in _FROM_SCORES:
        raise DomainError(f"{statistic} is not a goodness-of-fit statistic")
    return float(_FROM_SCORES[statistic](_scores(x, f0)))


def simulate_null(statistic: Statistic, n: int, reps: int, rng: RngStream) -> FloatArray:
    """Sorted null sample of a statistic.

    Under homogeneity P_hat(1_n) is uniform on the simplex; under F0 the scores F0(X_(i)) are
    ordered uniforms, so neither null depends on the unknown common rate or on F0 itself.
    """
    if reps < MIN_NULL_REPS:
        raise ConfigurationError(f"null replications must be >= {MIN_NULL_REPS}, got {reps}")
    if statistic == Statistic.LR:
        values = lr_statistics(sample_uniform_simplex(n, rng, reps))
    else:
        values = _FROM_SCORES[statistic](sample_ordered_uniforms(n, rng, reps))
    return np.sort(values)


def null_distribution(
    statistic: Statistic,
    n: int,
    alpha: float,
    reps: int,
    rng: RngStream,
    cache: NullDistributionCache | None = None,
) -> FloatArray:
    if cache is None:
        return simulate_null(statistic, n, reps, rng)
    return cache.get_or_create(statistic, n, alpha, reps, rng, lambda: simulate_null(statistic, n, reps, rng))


def critical_value(null: FloatArray, alpha: float) -> float:
    return float(np.quantile(null, 1.0 - alpha, method="higher"))


def decide(statistic: float, null: FloatArray, alpha: float) -> TestResult:
    exceed = int(null.size - np.searchsorted(null, statistic, side="left"))
    p_value = exceed / null.size
    crit = critical_value(null, alpha)
    return TestResult(
        statistic=statistic,
        critical_value=crit,
        p_value=p_value,
        p_value_se=binomial_se(p_value, null.size),
        reject=bool(statistic > crit),
        reps_used=int(null.size),
    )


def lr_test(
    x: ArrayLike, alpha: float, reps: int, rng: RngStream, cache: NullDistributionCache | None = None
) -> TestResult:
    statistic = lr_statistic(x)
    null = null_distribution(Statistic.LR, np.asarray(x).size, alpha, reps, rng, cache)
    return decide(statistic, null, alpha)


def gof_test(
    statistic: Statistic,
    x: ArrayLike,
    f0: Distribution,
    alpha: float,
    reps: int,
    rng: RngStream,
    cache: NullDistributionCache | None = None,
) -> TestResult:
    value = gof_statistic(statistic, x, f0)
    null = null_distribution(statistic, np.asarray(x).size, alpha, reps, rng, cache)
    return decide(value, null, alpha)
