from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
from typing import overload

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy import special

from wbinfer.errors import DomainError

FloatArray = NDArray[np.float64]

_NEWTON_STEPS = 3
_UINT64_MAX = 2**64 - 1


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    The underlying Philox generator is created lazily from a ``SeedSequence`` whose spawn key is
    ``(stream_id, *path)``, so a stream is reproducible from its key alone and child streams never
    share state with their parent.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    _generator: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _UINT64_MAX or not 0 <= self.stream_id <= _UINT64_MAX:
            raise DomainError(f"seed and stream_id must be unsigned 64-bit integers: {self.seed}, {self.stream_id}")

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *self.path))
            self._generator = np.random.Generator(np.random.Philox(sequence))
        return self._generator

    def child(self, index: int) -> RngStream:
        return RngStream(self.seed, self.stream_id, (*self.path, index))

    def replay(self) -> RngStream:
        """A fresh stream positioned at draw index 0 with the same key."""
        return RngStream(self.seed, self.stream_id, self.path)

    def uniform(self, size: int | tuple[int, ...] | None = None) -> FloatArray:
        return self.generator.random(size)


def _finite(x: ArrayLike, name: str) -> FloatArray:
    values = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{name} must be finite")
    return values


def _result(values: FloatArray) -> FloatArray | float:
    if values.ndim == 0:
        return float(values)
    return values


@overload
def std_normal_cdf(x: float) -> float: ...


@overload
def std_normal_cdf(x: FloatArray) -> FloatArray: ...


def std_normal_cdf(x: ArrayLike) -> FloatArray | float:
    return _result(special.ndtr(_finite(x, "x")))


@overload
def std_normal_quantile(p: float) -> float: ...


@overload
def std_normal_quantile(p: FloatArray) -> FloatArray: ...


def std_normal_quantile(p: ArrayLike) -> FloatArray | float:
    values = np.asarray(p, dtype=np.float64)
    if not np.all((values > 0.0) & (values < 1.0)):
        raise DomainError("p must lie in the open interval (0, 1)")
    return _result(special.ndtri(values))


def _check_beta_params(a: ArrayLike, b: ArrayLike) -> tuple[FloatArray, FloatArray]:
    a_values = np.asarray(a, dtype=np.float64)
    b_values = np.asarray(b, dtype=np.float64)
    if not (np.all(a_values > 0.0) and np.all(b_values > 0.0)):
        raise DomainError("beta shape parameters must be positive")
    return a_values, b_values


def _check_probability(x: ArrayLike, name: str) -> FloatArray:
    values = np.asarray(x, dtype=np.float64)
    if not np.all((values >= 0.0) & (values <= 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return values


@overload
def reg_inc_beta(x: float, a: float, b: float) -> float: ...


@overload
def reg_inc_beta(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> FloatArray | float: ...


def reg_inc_beta(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> FloatArray | float:
    """P(Beta(a, b) <= x)."""
    a_values, b_values = _check_beta_params(a, b)
    return _result(special.betainc(a_values, b_values, _check_probability(x, "x")))


def _beta_log_pdf(x: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b)


@overload
def inv_reg_inc_beta(p: float, a: float, b: float) -> float: ...


@overload
def inv_reg_inc_beta(p: ArrayLike, a: ArrayLike, b: ArrayLike) -> FloatArray | float: ...


def inv_reg_inc_beta(p: ArrayLike, a: ArrayLike, b: ArrayLike) -> FloatArray | float:
    """Beta quantile, with Newton polishing of the library inverse.

    Endpoint convention: 0 at p=0 and 1 at p=1.
    """
    a_values, b_values = _check_beta_params(a, b)
    p_values = _check_probability(p, "p")
    a_values, b_values, p_values = np.broadcast_arrays(a_values, b_values, p_values)
    x = np.asarray(special.betaincinv(a_values, b_values, p_values), dtype=np.float64)

    interior = (p_values > 0.0) & (p_values < 1.0) & (x > 0.0) & (x < 1.0)
    for _ in range(_NEWTON_STEPS):
        error = special.betainc(a_values, b_values, x) - p_values
        density = np.exp(_beta_log_pdf(x, a_values, b_values))
        with np.errstate(divide="ignore", invalid="ignore"):
            candidate = np.clip(x - error / density, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        improved = np.abs(special.betainc(a_values, b_values, candidate) - p_values) < np.abs(error)
        x = np.where(interior & np.isfinite(candidate) & improved, candidate, x)

    x = np.where(p_values == 0.0, 0.0, x)
    x = np.where(p_values == 1.0, 1.0, x)
    return _result(x)


def log_gamma(x: ArrayLike) -> FloatArray | float:
    values = _finite(x, "x")
    if not np.all(values > 0.0):
        raise DomainError("log_gamma is defined here for positive arguments only")
    return _result(special.gammaln(values))


def sample_uniform_simplex(n: int, rng: RngStream, size: int | None = None) -> FloatArray:
    """Uniform draws on the (n-1)-simplex, i.e. Dir(1_n), by normalizing standard exponentials.

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    if n < 2:
        raise DomainError(f"simplex dimension n must be >= 2, got {n}")
    shape = (n,) if size is None else (size, n)
    spacings = rng.generator.standard_exponential(shape)
    return spacings / spacings.sum(axis=-1, keepdims=True)


def sample_ordered_uniforms(n: int, rng: RngStream, size: int | None = None) -> FloatArray:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    shape = (n,) if size is None else (size, n)
    return np.sort(rng.uniform(shape), axis=-1)


def pad_order_statistics(ordered: FloatArray) -> FloatArray:
    """Add the conventional slots U_(0) = 0 and U_(n+1) = 1 along the last axis."""
    pad = [(0, 0)] * (ordered.ndim - 1) + [(1, 1)]
    padded = np.pad(ordered, pad, constant_values=0.0)
    padded[..., -1] = 1.0
    return padded


def sample_beta(a: float, b: float, rng: RngStream, size: int | tuple[int, ...] | None = None) -> FloatArray:
    _check_beta_params(a, b)
    return np.asarray(rng.generator.beta(a, b, size), dtype=np.float64)


def sample_gamma(
    shape: float, rng: RngStream, scale: float = 1.0, size: int | tuple[int, ...] | None = None
) -> FloatArray:
    if shape <= 0.0 or scale <= 0.0:
        raise DomainError("gamma shape and scale must be positive")
    return np.asarray(rng.generator.gamma(shape, scale, size), dtype=np.float64)


def sample_exponential(rate: ArrayLike, rng: RngStream, size: int | tuple[int, ...] | None = None) -> FloatArray:
    rates = _finite(rate, "rate")
    if not np.all(rates > 0.0):
        raise DomainError("exponential rate must be positive")
    return np.asarray(rng.generator.exponential(1.0 / rates, size), dtype=np.float64)
