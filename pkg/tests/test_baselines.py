from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from wbinfer.baselines import Statistic
from wbinfer.baselines import ad_from_scores
from wbinfer.baselines import ad_statistic
from wbinfer.baselines import critical_value
from wbinfer.baselines import cvm_from_scores
from wbinfer.baselines import cvm_statistic
from wbinfer.baselines import decide
from wbinfer.baselines import gof_statistic
from wbinfer.baselines import gof_test
from wbinfer.baselines import ks_from_scores
from wbinfer.baselines import ks_statistic
from wbinfer.baselines import lr_statistic
from wbinfer.baselines import lr_statistics
from wbinfer.baselines import lr_test
from wbinfer.baselines import simulate_null
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.io import NullDistributionCache
from wbinfer.models import ModelParams
from wbinfer.models import generate_data
from wbinfer.specfun import RngStream
from wbinfer.types import UNIFORM
from wbinfer.types import Distribution
from wbinfer.types import ModelTag


def test_lr_statistic_values() -> None:
    assert lr_statistic([1.0, 3.0]) == pytest.approx(math.log(4.0 / 3.0), abs=1e-12)
    assert lr_statistic([2.0, 2.0, 2.0]) == pytest.approx(0.0, abs=1e-12)


def test_lr_statistic_is_the_classical_log_likelihood_ratio() -> None:
    x = np.array([0.3, 1.7, 0.2, 4.1, 0.9])
    classical = x.size * math.log(x.mean()) - np.sum(np.log(x))
    assert lr_statistic(x) == pytest.approx(classical, rel=1e-12)
    assert lr_statistic(x) == pytest.approx(float(lr_statistics(x / x.sum())), rel=1e-12)


def test_lr_statistic_is_scale_invariant() -> None:
    x = np.array([0.5, 2.0, 1.25])
    assert lr_statistic(7.5 * x) == pytest.approx(lr_statistic(x), rel=1e-12)


def test_lr_statistic_needs_positive_data() -> None:
    with pytest.raises(DomainError):
        lr_statistic([1.0, -2.0])


def test_ks_from_scores() -> None:
    assert float(ks_from_scores(np.array([0.3]))) == pytest.approx(0.7)
    assert ks_statistic([0.9, 0.1, 0.5], UNIFORM) == pytest.approx(stats.kstest([0.9, 0.1, 0.5], "uniform").statistic)


def test_cvm_is_minimal_at_plotting_positions() -> None:
    n = 6
    t = (2 * np.arange(1, n + 1) - 1) / (2.0 * n)
    assert float(cvm_from_scores(t)) == pytest.approx(1.0 / (12 * n))


def test_cvm_matches_scipy() -> None:
    x = generate_data(ModelTag.ONESAMPLE, ModelParams(distribution=UNIFORM), 15, RngStream(1)).observations
    assert cvm_statistic(x, UNIFORM) == pytest.approx(stats.cramervonmises(x, "uniform").statistic, rel=1e-10)


def test_ad_matches_direct_sum() -> None:
    t = np.array([0.1, 0.35, 0.4, 0.8])
    n = t.size
    expected = -n - sum((2 * i - 1) * (math.log(t[i - 1]) + math.log(1 - t[n - i])) for i in range(1, n + 1)) / n
    assert float(ad_from_scores(t)) == pytest.approx(expected, rel=1e-12)
    assert ad_statistic(t, UNIFORM) == pytest.approx(expected, rel=1e-12)


def test_ad_is_infinite_at_the_support_edge() -> None:
    assert math.isinf(float(ad_from_scores(np.array([0.0, 0.5]))))


@pytest.mark.parametrize("statistic", [Statistic.KS, Statistic.AD, Statistic.CVM])
def test_gof_statistics_are_reparametrization_invariant(statistic: Statistic) -> None:
    x = generate_data(ModelTag.ONESAMPLE, ModelParams(distribution=UNIFORM), 12, RngStream(2)).observations
    z = stats.norm.ppf(x)
    logged = gof_statistic(statistic, np.exp(z), Distribution("lognorm", (1.0,)))
    assert logged == pytest.approx(gof_statistic(statistic, z, Distribution("norm", (0.0, 1.0))), rel=1e-8)


def test_gof_statistic_rejects_lr() -> None:
    with pytest.raises(DomainError):
        gof_statistic(Statistic.LR, [0.5], UNIFORM)


def test_simulate_null_is_sorted_and_sized() -> None:
    null = simulate_null(Statistic.KS, 5, 1_000, RngStream(3))
    assert null.shape == (1_000,)
    assert np.all(np.diff(null) >= 0.0)
    assert np.all(null > 0.0)


def test_simulate_null_needs_enough_replications() -> None:
    with pytest.raises(ConfigurationError):
        simulate_null(Statistic.LR, 5, 999, RngStream(3))


def test_lr_null_matches_direct_exponentials() -> None:
    null = simulate_null(Statistic.LR, 4, 4_000, RngStream(4))
    rng = RngStream(5)
    direct = [
        lr_statistic(generate_data(ModelTag.HOMOGENEITY, ModelParams(), 4, rng.child(i)).observations)
        for i in range(2_000)
    ]
    assert stats.ks_2samp(null, direct).pvalue > 1e-3


def test_critical_value_uses_upper_order_statistic() -> None:
    null = np.arange(1, 101) / 100.0
    assert critical_value(null, 0.05) == pytest.approx(0.96)


def test_decide() -> None:
    null = np.arange(1, 101) / 100.0
    keep = decide(0.955, null, 0.05)
    assert not keep.reject
    assert keep.p_value == pytest.approx(0.05)
    assert keep.reps_used == 100
    reject = decide(0.975, null, 0.05)
    assert reject.reject
    assert reject.p_value == pytest.approx(0.03)
    assert reject.p_value_se == pytest.approx(math.sqrt(0.03 * 0.97 / 100))


def test_lr_test_holds_its_size() -> None:
    cache = NullDistributionCache()
    trials = 2_000
    rejections = 0
    for i in range(trials):
        x = generate_data(ModelTag.HOMOGENEITY, ModelParams(), 5, RngStream(6, i)).observations
        rejections += lr_test(x, 0.05, 4_000, RngStream(7), cache).reject
    assert abs(rejections / trials - 0.05) <= 0.025


def test_lr_test_detects_unequal_rates() -> None:
    rates = (1.0,) * 10 + (20.0,) * 10
    x = generate_data(ModelTag.HOMOGENEITY, ModelParams(rates=rates), 20, RngStream(8)).observations
    assert lr_test(x, 0.05, 2_000, RngStream(9)).reject


def test_gof_test_detects_a_shifted_sample() -> None:
    shifted = ModelParams(distribution=Distribution("beta", (5.0, 1.0)))
    x = generate_data(ModelTag.ONESAMPLE, shifted, 30, RngStream(10))
    for statistic in (Statistic.KS, Statistic.AD, Statistic.CVM):
        result = gof_test(statistic, x.observations, UNIFORM, 0.05, 2_000, RngStream(11))
        assert result.reject
        assert result.statistic > result.critical_value


def test_null_cache_reuses_the_sample() -> None:
    cache = NullDistributionCache()
    first = lr_test([1.0, 2.0, 3.0], 0.05, 1_000, RngStream(12), cache)
    second = lr_test([3.0, 2.0, 1.0], 0.05, 1_000, RngStream(12), cache)
    assert first.critical_value == second.critical_value
    assert first.statistic == pytest.approx(second.statistic)
