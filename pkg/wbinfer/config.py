from __future__ import annotations

import logging
from dataclasses import dataclass
from dataclasses import replace
from typing import Any

import fsspec

from wbinfer.errors import ConfigurationError
from wbinfer.errors import ParseError

logger = logging.getLogger(__name__)

MIN_INNER_DRAWS = 100


@dataclass(frozen=True)
class MonteCarloParams:
    inner: int = 10_000
    outer: int = 1_000
    recheck_outer: int = 10_000

    def __post_init__(self) -> None:
        if self.inner < MIN_INNER_DRAWS:
            raise ConfigurationError(f"mc.inner must be >= {MIN_INNER_DRAWS}, got {self.inner}")
        if self.outer < 1 or self.recheck_outer < 1:
            raise ConfigurationError("mc.outer and mc.recheck_outer must be >= 1")

    def with_inner(self, inner: int) -> MonteCarloParams:
        return replace(self, inner=inner)


@dataclass(frozen=True)
class SaParams:
    """Robbins-Monro schedule a_t = c / (t + t0) with Polyak averaging over the trailing iterates.

    ``c=None`` resolves to twice the width of the clamped search box of the family being calibrated.
    Inner Monte Carlo sizes switch from ``inner_early`` to ``inner_late`` halfway through the run.
    """

    c: float | None = None
    t0: float = 20.0
    max_iters: int = 2000
    batch: int = 200
    tail_fraction: float = 0.25
    tolerance: float = 0.01
    inner_early: int = 1_000
    inner_late: int = 10_000
    recheck_outer: int = 10_000
    warm_start: bool = True

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.batch < 1 or self.recheck_outer < 1:
            raise ConfigurationError("sa.max_iters, sa.batch and sa.recheck_outer must be >= 1")
        if min(self.inner_early, self.inner_late) < MIN_INNER_DRAWS:
            raise ConfigurationError(f"sa inner draws must be >= {MIN_INNER_DRAWS}")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ConfigurationError(f"sa.tail_fraction must lie in (0, 1], got {self.tail_fraction}")
        if self.t0 <= 0.0 or (self.c is not None and self.c <= 0.0) or self.tolerance <= 0.0:
            raise ConfigurationError("sa.t0, sa.c and sa.tolerance must be positive")

    def inner_at(self, iteration: int) -> int:
        return self.inner_early if iteration < self.max_iters // 2 else self.inner_late


def parse_config_text(text: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment, blank lines are skipped."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", line=number)
        values[key.replace("-", "_")] = value
    return values


def read_config_file(filename: str) -> dict[str, str]:
    with fsspec.open(filename, "r") as fin:
        values = parse_config_text(fin.read())
    logger.debug("read %d config keys from %s", len(values), filename)
    return values


def merge_overrides(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """CLI flags win over file values; ``None`` means the flag was not given."""
    merged = dict(base)
    merged.update({key: value for key, value in overrides.items() if value is not None and value != ()})
    return merged
