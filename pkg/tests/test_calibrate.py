from __future__ import annotations

import math

import numpy as np
import pytest

from wbinfer.calibrate import SearchBox
from wbinfer.calibrate import credibility_curve
from wbinfer.calibrate import credibility_oracle_interval
from wbinfer.calibrate import is_as_efficient
from wbinfer.calibrate import noncoverage_table
from wbinfer.calibrate import oracle_root_interval
from wbinfer.calibrate import phi_alpha
from wbinfer.calibrate import sa_gain
from wbinfer.calibrate import search_box
from wbinfer.calibrate import solve_mb
from wbinfer.config import MonteCarloParams
from wbinfer.config import SaParams
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.specfun import RngStream

INTERVAL = PrsFamily(PrsKind.INTERVAL)


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.5])
def test_phi_at_interval_endpoints(alpha: float) -> None:
    mc = MonteCarloParams(outer=2_000)
    assert phi_alpha(INTERVAL.with_omega(1.0), alpha, mc, RngStream(1)).phi_hat == 0.0
    assert phi_alpha(INTERVAL.with_omega(0.0), alpha, mc, RngStream(1)).phi_hat == 1.0
    assert phi_alpha(PrsFamily(PrsKind.VACUOUS), alpha, mc, RngStream(1)).phi_hat == 0.0
    assert phi_alpha(PrsFamily(PrsKind.POINT), alpha, mc, RngStream(1)).phi_hat == 1.0


@pytest.mark.parametrize("omega", [0.5, 0.7, 0.9, 1.0])
@pytest.mark.parametrize("alpha", [0.05, 0.10])
def test_interval_family_is_credible_above_one_half(omega: float, alpha: float) -> None:
    estimate = phi_alpha(INTERVAL.with_omega(omega), alpha, MonteCarloParams(outer=100_000), RngStream(2))
    assert estimate.phi_hat <= alpha + 3 * estimate.std_err
    assert estimate.std_err <= 0.5 / math.sqrt(estimate.outer_draws)


def test_phi_rejects_invalid_alpha() -> None:
    with pytest.raises(DomainError):
        phi_alpha(INTERVAL, 1.0, MonteCarloParams(), RngStream(0))


def test_credibility_curve_endpoints() -> None:
    curve = credibility_curve(INTERVAL, [0.0, 1.0], 0.05, MonteCarloParams(outer=1_000), RngStream(3))
    assert [e.phi_hat for e in curve] == [1.0, 0.0]


def test_credibility_curve_needs_grid() -> None:
    with pytest.raises(ConfigurationError):
        credibility_curve(INTERVAL, [], 0.05, MonteCarloParams(), RngStream(3))


@pytest.mark.parametrize(
    "family",
    [
        INTERVAL,
        PrsFamily(PrsKind.RECTANGLE, n=3),
        PrsFamily(PrsKind.KL_BALL, n=3),
        PrsFamily(PrsKind.BETA_BOX_HIER, n=4),
    ],
    ids=lambda f: str(f.kind),
)
def test_credibility_curve_is_nonincreasing(family: PrsFamily) -> None:
    omegas = [0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0]
    mc = MonteCarloParams(inner=1_000, outer=300)
    curve = credibility_curve(family, omegas, 0.1, mc, RngStream(4))
    phis = [e.phi_hat for e in curve]
    assert all(b <= a for a, b in zip(phis, phis[1:]))


def test_credibility_curve_matches_quadrature_oracle() -> None:
    (estimate,) = credibility_curve(INTERVAL, [0.5], 0.1, MonteCarloParams(outer=50_000), RngStream(5))
    oracle = credibility_oracle_interval(0.1, 0.5)
    assert oracle == pytest.approx(0.1, abs=1e-8)
    assert abs(estimate.phi_hat - oracle) <= 3 * estimate.std_err


@pytest.mark.parametrize(("alpha", "omega"), [(0.05, 0.5), (0.05, 0.7), (0.1, 0.9), (0.2, 0.6)])
def test_oracle_is_linear_above_the_root(alpha: float, omega: float) -> None:
    assert credibility_oracle_interval(alpha, omega) == pytest.approx(2 * alpha * (1 - omega), abs=1e-8)


@pytest.mark.parametrize("alpha", [0.05, 0.1])
def test_oracle_root_interval(alpha: float) -> None:
    assert oracle_root_interval(alpha) == pytest.approx(0.5, abs=1e-6)


def test_noncoverage_table_shares_draws() -> None:
    family = PrsFamily(PrsKind.RECTANGLE, n=2)
    table = noncoverage_table(family, [0.1, 0.3], 50, 500, RngStream(6))
    again = noncoverage_table(family, [0.3], 50, 500, RngStream(6))
    np.testing.assert_array_equal(table[1], again[0])
    assert np.all(table[1] <= table[0])


def test_is_as_efficient() -> None:
    mc = MonteCarloParams(outer=5_000)
    alphas = [0.05, 0.1, 0.2]
    assert is_as_efficient(INTERVAL, 0.5, 0.8, alphas, mc, RngStream(7))
    assert not is_as_efficient(INTERVAL, 0.8, 0.5, alphas, mc, RngStream(7))


def test_search_boxes() -> None:
    assert search_box(INTERVAL) == SearchBox(0.0, 1.0)
    kl = search_box(PrsFamily(PrsKind.KL_BALL, n=10))
    assert kl.upper == pytest.approx(math.log(10) + 5.0)
    hier = search_box(PrsFamily(PrsKind.BETA_BOX_HIER, n=5))
    assert hier.log_scale
    assert hier.to_omega(hier.lower) == pytest.approx(1e-3)
    assert hier.to_omega(hier.upper) == pytest.approx(1e3)
    assert hier.clamp(10.0) == hier.upper
    assert hier.at_boundary(hier.upper)
    with pytest.raises(ConfigurationError):
        search_box(PrsFamily(PrsKind.BETA_BOX_HIER, n=5, fixed_z=0.8))


@pytest.mark.parametrize("alpha", [0.05, 0.1])
def test_solve_mb_interval_matches_oracle_root(alpha: float) -> None:
    result = solve_mb(INTERVAL, alpha, SaParams(), RngStream(8))
    assert result.converged
    assert abs(result.final_phi.phi_hat - alpha) <= 0.01
    assert abs(credibility_oracle_interval(alpha, result.omega_star) - alpha) <= 0.01
    assert abs(result.omega_star - oracle_root_interval(alpha)) <= 0.02
    assert len(result.trajectory) == 2000
    assert result.calibrated_family == INTERVAL.with_omega(result.omega_star)


def test_sa_gain_follows_the_scan_slope() -> None:
    box = SearchBox(0.0, 1.0)
    assert sa_gain(box, SaParams()) == 2.0
    assert sa_gain(box, SaParams(c=3.0), slope=-0.1) == 3.0
    assert sa_gain(box, SaParams(), slope=-0.1) == pytest.approx(15.0)
    assert sa_gain(box, SaParams(), slope=-10.0) == 2.0
    assert sa_gain(box, SaParams(), slope=-1e-6) == 25.0
    assert sa_gain(SearchBox(-3.0, 3.0, log_scale=True), SaParams(), slope=-0.05) == pytest.approx(30.0)


def test_solve_mb_is_deterministic() -> None:
    sa = SaParams(max_iters=50, batch=50, inner_early=100, inner_late=100, recheck_outer=1_000)
    first = solve_mb(INTERVAL, 0.05, sa, RngStream(9))
    second = solve_mb(INTERVAL, 0.05, sa, RngStream(9))
    assert first == second


def test_solve_mb_reports_non_convergence() -> None:
    sa = SaParams(max_iters=1, batch=10, tolerance=1e-9, inner_early=100, inner_late=100, recheck_outer=9_999)
    result = solve_mb(INTERVAL, 0.05, sa, RngStream(10))
    assert not result.converged
    assert len(result.trajectory) == 1


@pytest.mark.slow
def test_solve_mb_kl_ball() -> None:
    family = PrsFamily(PrsKind.KL_BALL, n=3)
    sa = SaParams(max_iters=400, batch=200, inner_early=1_000, inner_late=4_000, recheck_outer=10_000)
    result = solve_mb(family, 0.05, sa, RngStream(11))
    box = search_box(family)
    assert box.lower < result.omega_star < box.upper
    assert abs(result.final_phi.phi_hat - 0.05) <= 0.02


@pytest.mark.slow
def test_hierarchical_family_credible_at_calibrated_omega() -> None:
    family = PrsFamily(PrsKind.BETA_BOX_HIER, n=50)
    sa = SaParams(max_iters=300, batch=200, inner_early=1_000, inner_late=2_000, recheck_outer=5_000)
    result = solve_mb(family, 0.05, sa, RngStream(12))
    check = phi_alpha(result.calibrated_family, 0.05, MonteCarloParams(inner=2_000, outer=10_000), RngStream(13))
    assert abs(check.phi_hat - 0.05) <= 0.01
