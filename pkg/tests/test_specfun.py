from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from wbinfer.errors import DomainError
from wbinfer.specfun import RngStream
from wbinfer.specfun import inv_reg_inc_beta
from wbinfer.specfun import log_gamma
from wbinfer.specfun import pad_order_statistics
from wbinfer.specfun import reg_inc_beta
from wbinfer.specfun import sample_beta
from wbinfer.specfun import sample_exponential
from wbinfer.specfun import sample_gamma
from wbinfer.specfun import sample_ordered_uniforms
from wbinfer.specfun import sample_uniform_simplex
from wbinfer.specfun import std_normal_cdf
from wbinfer.specfun import std_normal_quantile


def test_std_normal_cdf_values() -> None:
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-12)
    assert std_normal_cdf(-1.0) == pytest.approx(1.0 - std_normal_cdf(1.0), abs=1e-15)


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_std_normal_cdf_rejects_non_finite(x: float) -> None:
    with pytest.raises(DomainError):
        std_normal_cdf(x)


def test_std_normal_quantile_values() -> None:
    assert std_normal_quantile(0.5) == 0.0
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert std_normal_quantile(std_normal_cdf(1.0)) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_std_normal_quantile_domain(p: float) -> None:
    with pytest.raises(DomainError):
        std_normal_quantile(p)


def test_normal_cdf_and_quantile_are_inverse() -> None:
    p = np.concatenate([np.logspace(-6, -1, 20), np.linspace(0.1, 0.9, 17), 1.0 - np.logspace(-6, -1, 20)])
    np.testing.assert_allclose(std_normal_cdf(std_normal_quantile(p)), p, rtol=0.0, atol=1e-9)


def test_reg_inc_beta_values() -> None:
    assert reg_inc_beta(0.5, 8, 5) == pytest.approx(794 / 4096, abs=1e-12)
    assert reg_inc_beta(0.0, 3.0, 4.0) == 0.0
    assert reg_inc_beta(1.0, 3.0, 4.0) == 1.0
    assert reg_inc_beta(0.3, 1, 1) == pytest.approx(0.3, abs=1e-15)


@pytest.mark.parametrize(("x", "a", "b"), [(1.2, 1, 1), (-0.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2)])
def test_reg_inc_beta_domain(x: float, a: float, b: float) -> None:
    with pytest.raises(DomainError):
        reg_inc_beta(x, a, b)


def test_inv_reg_inc_beta_values() -> None:
    assert inv_reg_inc_beta(0.19384765625, 8, 5) == pytest.approx(0.5, abs=1e-8)
    assert inv_reg_inc_beta(0.5, 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert inv_reg_inc_beta(0.0, 3, 8) == 0.0
    assert inv_reg_inc_beta(1.0, 3, 8) == 1.0


@pytest.mark.parametrize("a", [1, 2, 5])
@pytest.mark.parametrize("b", [1, 2, 5])
def test_inv_reg_inc_beta_round_trip(a: int, b: int) -> None:
    x = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(inv_reg_inc_beta(reg_inc_beta(x, a, b), a, b), x, rtol=0.0, atol=1e-8)


@pytest.mark.parametrize("a", [1, 2, 7, 13, 20])
@pytest.mark.parametrize("b", [1, 3, 10, 20])
def test_inv_reg_inc_beta_hits_probability(a: int, b: int) -> None:
    p = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(reg_inc_beta(inv_reg_inc_beta(p, a, b), a, b), p, rtol=0.0, atol=1e-10)


def test_log_gamma() -> None:
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-14)
    with pytest.raises(DomainError):
        log_gamma(0.0)


def test_rng_stream_replays_identically() -> None:
    first = sample_uniform_simplex(3, RngStream(12345, 7))
    second = sample_uniform_simplex(3, RngStream(12345, 7))
    np.testing.assert_array_equal(first, second)
    stream = RngStream(12345, 7)
    np.testing.assert_array_equal(stream.uniform(5), stream.replay().uniform(5))


def test_rng_streams_are_independent() -> None:
    a = RngStream(99, 0).uniform(100_000)
    b = RngStream(99, 1).uniform(100_000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
    counts, _, _ = np.histogram2d(a, b, bins=4)
    assert stats.chi2_contingency(counts).pvalue > 0.001


def test_child_streams_differ_from_parent() -> None:
    parent = RngStream(5, 2)
    assert parent.child(0).path == (0,)
    assert not np.array_equal(parent.uniform(10), parent.child(0).uniform(10))


def test_rng_stream_rejects_out_of_range_seed() -> None:
    with pytest.raises(DomainError):
        RngStream(-1)
    with pytest.raises(DomainError):
        RngStream(2**64)


def test_uniform_simplex_sums_to_one() -> None:
    draws = sample_uniform_simplex(5, RngStream(1), 1_000)
    assert draws.shape == (1_000, 5)
    assert np.all(draws >= 0.0)
    np.testing.assert_allclose(draws.sum(axis=1), 1.0, atol=1e-12)


def test_uniform_simplex_two_dimensional_margin_is_uniform() -> None:
    draws = sample_uniform_simplex(2, RngStream(2024), 10_000)
    assert stats.kstest(draws[:, 0], "uniform").pvalue > 1e-3


def test_uniform_simplex_needs_two_coordinates() -> None:
    with pytest.raises(DomainError):
        sample_uniform_simplex(1, RngStream(0))


def test_ordered_uniform_means() -> None:
    n, reps = 5, 10_000
    draws = sample_ordered_uniforms(n, RngStream(31), reps)
    assert np.all(np.diff(draws, axis=1) >= 0.0)
    for i in range(1, n + 1):
        expected = i / (n + 1)
        se = math.sqrt(i * (n + 1 - i) / ((n + 1) ** 2 * (n + 2)) / reps)
        assert abs(draws[:, i - 1].mean() - expected) < 4 * se


def test_single_ordered_uniform() -> None:
    draw = sample_ordered_uniforms(1, RngStream(3))
    assert draw.shape == (1,)
    assert 0.0 <= draw[0] <= 1.0


def test_order_statistic_probability_integral_transform() -> None:
    n, i = 7, 3
    draws = sample_ordered_uniforms(n, RngStream(77), 10_000)
    transformed = reg_inc_beta(draws[:, i - 1], i, n - i + 1)
    assert stats.kstest(transformed, "uniform").pvalue > 1e-3


def test_pad_order_statistics() -> None:
    padded = pad_order_statistics(np.array([[0.2, 0.7], [0.1, 0.4]]))
    np.testing.assert_array_equal(padded, [[0.0, 0.2, 0.7, 1.0], [0.0, 0.1, 0.4, 1.0]])


def test_gamma_and_exponential_means() -> None:
    gamma = sample_gamma(4.0, RngStream(8), size=20_000)
    assert abs(gamma.mean() - 4.0) < 4 * math.sqrt(4.0 / 20_000)
    exponential = sample_exponential(2.0, RngStream(9), size=20_000)
    assert abs(exponential.mean() - 0.5) < 4 * 0.5 / math.sqrt(20_000)
    with pytest.raises(DomainError):
        sample_exponential(0.0, RngStream(9))


def test_beta_sample_mean() -> None:
    draws = sample_beta(2.0, 5.0, RngStream(10), size=20_000)
    sd = math.sqrt(10.0 / (49.0 * 8.0))
    assert abs(draws.mean() - 2.0 / 7.0) < 4 * sd / math.sqrt(20_000)
    assert np.all((draws > 0.0) & (draws < 1.0))
    with pytest.raises(DomainError):
        sample_beta(0.0, 1.0, RngStream(10))
