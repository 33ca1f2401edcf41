from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import stats

from wbinfer.errors import DomainError


def binomial_se(p: float, draws: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / draws) if draws > 0 else 0.0


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    std_err: float = 0.0
    draws: int = 0

    @classmethod
    def from_count(cls, hits: int, draws: int) -> ProbabilityEstimate:
        value = hits / draws
        return cls(value=value, std_err=binomial_se(value, draws), draws=draws)

    @classmethod
    def exact(cls, value: float) -> ProbabilityEstimate:
        return cls(value=float(value))


@dataclass(frozen=True)
class BeliefPair:
    belief: float
    plausibility: float
    belief_se: float = 0.0
    plausibility_se: float = 0.0
    conflict_mass: float = 0.0

    def complement(self) -> BeliefPair:
        """Belief pair of the complementary assertion: bel(Ac) = 1 - pl(A), pl(Ac) = 1 - bel(A)."""
        return BeliefPair(
            belief=1.0 - self.plausibility,
            plausibility=1.0 - self.belief,
            belief_se=self.plausibility_se,
            plausibility_se=self.belief_se,
            conflict_mass=self.conflict_mass,
        )

    @property
    def uncertainty(self) -> float:
        return self.plausibility - self.belief


class AssertionKind(StrEnum):
    LE_THETA = "le-theta"
    GT_THETA = "gt-theta"
    SINGLETON = "singleton"
    HOMOGENEITY = "homogeneity"
    CDF_EQUALS_F0 = "cdf-equals-F0"


@dataclass(frozen=True)
class Distribution:
    """A continuous distribution named as in ``scipy.stats`` with positional shape/loc/scale params."""

    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        family = getattr(stats, self.name, None)
        if not isinstance(family, stats.rv_continuous):
            raise DomainError(f"unknown continuous distribution: {self.name!r}")

    @property
    def frozen(self) -> Any:
        return getattr(stats, self.name)(*self.params)

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        values = np.asarray(self.frozen.cdf(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        if not np.all(np.isfinite(values)) or np.any((values < 0.0) | (values > 1.0)):
            raise DomainError(f"{self} is not evaluable on the given data")
        return values

    def ppf(self, u: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.frozen.ppf(np.asarray(u, dtype=np.float64)), dtype=np.float64)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(f'{p:g}' for p in self.params)})"


UNIFORM = Distribution("uniform", (0.0, 1.0))


@dataclass(frozen=True)
class Assertion:
    kind: AssertionKind
    theta: float | None = None
    target: Distribution | None = None

    def __post_init__(self) -> None:
        match self.kind:
            case AssertionKind.LE_THETA | AssertionKind.GT_THETA | AssertionKind.SINGLETON:
                if self.theta is None:
                    raise DomainError(f"{self.kind} assertion needs a threshold theta")
            case AssertionKind.CDF_EQUALS_F0:
                if self.target is None:
                    raise DomainError("cdf-equals-F0 assertion needs a target distribution")

    @classmethod
    def le(cls, theta: float) -> Assertion:
        return cls(AssertionKind.LE_THETA, theta=theta)

    @classmethod
    def gt(cls, theta: float) -> Assertion:
        return cls(AssertionKind.GT_THETA, theta=theta)

    @classmethod
    def singleton(cls, theta: float) -> Assertion:
        return cls(AssertionKind.SINGLETON, theta=theta)

    def complement(self) -> Assertion:
        match self.kind:
            case AssertionKind.LE_THETA:
                return Assertion(AssertionKind.GT_THETA, theta=self.theta)
            case AssertionKind.GT_THETA:
                return Assertion(AssertionKind.LE_THETA, theta=self.theta)
            case _:
                raise DomainError(f"the complement of a {self.kind} assertion is not a supported assertion")

    def holds(self, parameter: Any) -> bool:
        """Evaluate the assertion as a predicate on a parameter point."""
        match self.kind:
            case AssertionKind.LE_THETA:
                return bool(parameter <= self.theta)
            case AssertionKind.GT_THETA:
                return bool(parameter > self.theta)
            case AssertionKind.SINGLETON:
                return bool(parameter == self.theta)
            case AssertionKind.HOMOGENEITY:
                rates = np.asarray(parameter, dtype=np.float64)
                return bool(np.all(rates == rates[0]))
            case AssertionKind.CDF_EQUALS_F0:
                return bool(parameter == self.target)
        raise DomainError(f"unsupported assertion kind: {self.kind}")


class ModelTag(StrEnum):
    NORMAL = "normal"
    BERNOULLI = "bernoulli"
    HOMOGENEITY = "homogeneity"
    ONESAMPLE = "onesample"


@dataclass(frozen=True)
class ObservedData:
    model: ModelTag
    observations: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = self.observations
        if values.ndim != 1 or values.size == 0:
            raise DomainError("observations must be a non-empty vector")
        match self.model:
            case ModelTag.HOMOGENEITY:
                if values.size < 2 or not np.all(values > 0.0):
                    raise DomainError("homogeneity data needs n >= 2 positive inter-arrival times")
            case ModelTag.BERNOULLI:
                if not np.all((values == 0.0) | (values == 1.0)):
                    raise DomainError("Bernoulli observations must be 0 or 1")
            case ModelTag.NORMAL | ModelTag.ONESAMPLE:
                if not np.all(np.isfinite(values)):
                    raise DomainError("observations must be finite")

    @property
    def n(self) -> int:
        return int(self.observations.size)

    @property
    def successes(self) -> int:
        return int(self.observations.sum())
