from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from wbinfer.calibrate import CalibrationResult
from wbinfer.config import MonteCarloParams
from wbinfer.errors import CalibrationError
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.prs import box_bounds
from wbinfer.prs import box_coverage_counts
from wbinfer.prs import interval_noncoverage
from wbinfer.prs import level_values
from wbinfer.prs import noncoverage
from wbinfer.prs import order_statistic_scores
from wbinfer.prs import order_statistic_shapes
from wbinfer.prs import sample_inner
from wbinfer.specfun import FloatArray
from wbinfer.specfun import RngStream
from wbinfer.specfun import pad_order_statistics
from wbinfer.specfun import reg_inc_beta
from wbinfer.specfun import sample_exponential
from wbinfer.specfun import sample_gamma
from wbinfer.specfun import sample_ordered_uniforms
from wbinfer.specfun import sample_uniform_simplex
from wbinfer.specfun import std_normal_cdf
from wbinfer.types import Assertion
from wbinfer.types import AssertionKind
from wbinfer.types import BeliefPair
from wbinfer.types import Distribution
from wbinfer.types import ModelTag
from wbinfer.types import ObservedData
from wbinfer.types import binomial_se

logger = logging.getLogger(__name__)

# leading inner draws checked for empty beta-box focal elements
CONFLICT_CHECK_DRAWS = 512


@dataclass(frozen=True)
class TestDecision:
    __test__ = False

    reject: bool
    evidence: BeliefPair
    omega: float
    alpha: float


@dataclass(frozen=True)
class ModelParams:
    """Forward-simulation parameters; which fields are used depends on the model tag."""

    theta: float | None = None
    rates: tuple[float, ...] | None = None
    distribution: Distribution | None = None
    via_pivot: bool = False


def _check_omega_unit(omega: float) -> None:
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"omega must lie in [0, 1], got {omega}")


def _mc_pair(belief_hits: int, plausibility_hits: int, draws: int) -> BeliefPair:
    belief = belief_hits / draws
    plausibility = plausibility_hits / draws
    return BeliefPair(
        belief=belief,
        plausibility=plausibility,
        belief_se=binomial_se(belief, draws),
        plausibility_se=binomial_se(plausibility, draws),
    )


# normal mean: X = Theta + Phi^-1(U)


def normal_belief(x: float, theta: float, omega: float) -> BeliefPair:
    """Closed-form weakened posterior for A_theta = {Theta <= theta} with the interval PRS."""
    _check_omega_unit(omega)
    if omega == 1.0:
        return BeliefPair(belief=0.0, plausibility=1.0)
    c = std_normal_cdf(x - theta)
    belief = max(1.0 - c / (1.0 - omega), 0.0)
    plausibility = 1.0 - max((c - omega) / (1.0 - omega), 0.0)
    return BeliefPair(belief=belief, plausibility=plausibility)


def normal_focal_elements(x: float, omega: float, u: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Posterior focal intervals [X - qnorm(U + omega (1 - U)), X - qnorm(U - omega U)]."""
    # ndtri maps the endpoints 0 and 1 to -inf and +inf, which is what the vacuous limit needs
    lower = x - special.ndtri(u + omega * (1.0 - u))
    upper = x - special.ndtri(u - omega * u)
    return lower, upper


def normal_belief_mc(x: float, theta: float, omega: float, mc: MonteCarloParams, rng: RngStream) -> BeliefPair:
    _check_omega_unit(omega)
    lower, upper = normal_focal_elements(x, omega, rng.uniform(mc.inner))
    return _mc_pair(int(np.sum(upper <= theta)), int(np.sum(lower <= theta)), mc.inner)


def normal_posterior(x: float, assertion: Assertion, omega: float) -> BeliefPair:
    return _threshold_posterior(assertion, lambda theta: normal_belief(x, theta, omega))


# Bernoulli: X_i = I{U_i <= theta}, focal elements from U_(N) and U_(N+1)


def _check_counts(n: int, successes: int) -> None:
    if n < 1 or not 0 <= successes <= n:
        raise DomainError(f"need 0 <= N <= n and n >= 1, got N={successes}, n={n}")


def bernoulli_belief(n: int, successes: int, theta: float, omega: float) -> BeliefPair:
    """Closed form from the marginal Beta laws of U_(N) and U_(N+1), with U_(0) = 0 and U_(n+1) = 1.

    belief: U_(N+1) + omega (1 - U_(N+1)) <= theta; plausibility: U_(N) (1 - omega) <= theta.
    """
    _check_counts(n, successes)
    _check_omega_unit(omega)
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")

    if successes == n or theta < omega or omega == 1.0:
        belief = 1.0 if theta >= 1.0 else 0.0
    else:
        belief = float(reg_inc_beta(min((theta - omega) / (1.0 - omega), 1.0), successes + 1, n - successes))

    if successes == 0 or omega == 1.0 or theta >= 1.0 - omega:
        plausibility = 1.0
    else:
        plausibility = float(reg_inc_beta(min(theta / (1.0 - omega), 1.0), successes, n - successes + 1))
    return BeliefPair(belief=belief, plausibility=plausibility)


def bernoulli_belief_mc(
    n: int, successes: int, theta: float, omega: float, mc: MonteCarloParams, rng: RngStream
) -> BeliefPair:
    """Monte Carlo twin of ``bernoulli_belief`` through the rectangle PRS on ordered uniforms."""
    _check_counts(n, successes)
    _check_omega_unit(omega)
    ordered = pad_order_statistics(sample_ordered_uniforms(n, rng, mc.inner))
    lower = ordered[:, successes] * (1.0 - omega)
    upper = ordered[:, successes + 1] + omega * (1.0 - ordered[:, successes + 1])
    return _mc_pair(int(np.sum(upper <= theta)), int(np.sum(lower <= theta)), mc.inner)


def bernoulli_posterior(n: int, successes: int, assertion: Assertion, omega: float) -> BeliefPair:
    return _threshold_posterior(assertion, lambda theta: bernoulli_belief(n, successes, theta, omega))


def _threshold_posterior(assertion: Assertion, le_theta: Callable[[float], BeliefPair]) -> BeliefPair:
    assert assertion.theta is not None
    pair = le_theta(assertion.theta)
    match assertion.kind:
        case AssertionKind.LE_THETA:
            return pair
        case AssertionKind.GT_THETA:
            return pair.complement()
        case AssertionKind.SINGLETON:
            # pl{theta} = P(lower <= theta) - P(upper < theta) for continuous focal endpoints
            return BeliefPair(belief=0.0, plausibility=max(pair.plausibility - pair.belief, 0.0))
    raise DomainError(f"{assertion.kind} assertions are not defined for scalar-parameter models")


def normal_singleton_plausibility(x: float, theta: float, omega: float) -> float:
    """pl{theta} = 1 - Q_omega(Phi(X - theta)); the focal interval covers theta iff S(U) covers Phi(X - theta)."""
    _check_omega_unit(omega)
    return float(1.0 - interval_noncoverage(omega, std_normal_cdf(x - theta)))


# homogeneity of exponential rates: U = (R, P), mu = Gamma(n, 1) x Unif(simplex)


def _homogeneity_data(x: ArrayLike) -> FloatArray:
    return ObservedData(ModelTag.HOMOGENEITY, np.asarray(x, dtype=np.float64)).observations


def homogeneity_plausibility(x: ArrayLike, omega: float, mc: MonteCarloParams, rng: RngStream) -> BeliefPair:
    """pl(all rates equal) = 1 - mu{P: K(P, P_hat(1_n)) > omega}; the sharp assertion has zero belief."""
    values = _homogeneity_data(x)
    p_hat = values / values.sum()
    family = PrsFamily(PrsKind.KL_BALL, n=values.size, omega=omega)
    q = noncoverage(family, np.concatenate([[values.sum()], p_hat]), mc, rng)
    return BeliefPair(belief=0.0, plausibility=1.0 - q.value, plausibility_se=q.std_err)


def _check_calibration(calib: CalibrationResult, kind: PrsKind, n: int, alpha: float) -> None:
    if calib.family.kind != kind or calib.family.n != n:
        raise ConfigurationError(
            f"calibration is for {calib.family.kind} with n={calib.family.n}, data needs {kind} with n={n}"
        )
    if not math.isclose(calib.alpha, alpha):
        raise ConfigurationError(f"calibration level {calib.alpha} does not match test level {alpha}")
    if not calib.converged:
        raise CalibrationError(calib)


def homogeneity_test(
    x: ArrayLike, alpha: float, calib: CalibrationResult, mc: MonteCarloParams, rng: RngStream
) -> TestDecision:
    """Reject homogeneity when the plausibility at the calibrated omega falls below alpha."""
    values = _homogeneity_data(x)
    _check_calibration(calib, PrsKind.KL_BALL, values.size, alpha)
    evidence = homogeneity_plausibility(values, calib.omega_star, mc, rng)
    return TestDecision(reject=evidence.plausibility < alpha, evidence=evidence, omega=calib.omega_star, alpha=alpha)


# one-sample goodness of fit: X_i = F^-1(U_i), hierarchical beta boxes on the ordered U


def onesample_scores(x: ArrayLike, f0: Distribution) -> FloatArray:
    """The ordered transformed sample (F0(X_(1)), ..., F0(X_(n)))."""
    values = ObservedData(ModelTag.ONESAMPLE, np.asarray(x, dtype=np.float64)).observations
    return f0.cdf(np.sort(values, kind="stable"))


def box_conflicts(family: PrsFamily, centers: FloatArray, z: FloatArray) -> FloatArray:
    """Draws whose beta box admits no nondecreasing CDF: some running max of A_i exceeds B_i."""
    i, b = order_statistic_shapes(family.n)
    p = special.betainc(i, b, centers)
    lower = special.betaincinv(i, b, p - z[:, None] * p)
    upper = special.betaincinv(i, b, p + z[:, None] * (1.0 - p))
    return np.any(np.maximum.accumulate(lower, axis=1) > upper, axis=1)


def onesample_plausibility(
    x: ArrayLike, f0: Distribution, omega: float, mc: MonteCarloParams, rng: RngStream
) -> BeliefPair:
    """pl(F = F0) from the hierarchical beta-box PRS, conditioned on nonempty focal elements.

    Coverage is counted on every inner draw in score space; the conflict mass is estimated on the first
    ``CONFLICT_CHECK_DRAWS`` draws.
    """
    scores = onesample_scores(x, f0)
    family = PrsFamily(PrsKind.BETA_BOX_HIER, n=scores.size, omega=omega)
    sample = sample_inner(family, rng, mc.inner)
    lower, upper = box_bounds(family, sample)
    covered = int(box_coverage_counts(lower, upper, order_statistic_scores(scores[None, :]))[0])
    checked = min(CONFLICT_CHECK_DRAWS, sample.size)
    z = level_values(family, sample)[:checked]
    conflict_mass = float(np.mean(box_conflicts(family, sample.centers[:checked], z)))
    # a box covering the data contains a nondecreasing point, so it is never a conflict
    consistent = mc.inner * (1.0 - conflict_mass)
    if consistent <= 0.0:
        raise DomainError("every focal element is empty; plausibility is undefined")
    plausibility = min(covered / consistent, 1.0)
    return BeliefPair(
        belief=0.0,
        plausibility=plausibility,
        plausibility_se=binomial_se(plausibility, max(1, round(consistent))),
        conflict_mass=conflict_mass,
    )


def onesample_test(
    x: ArrayLike, f0: Distribution, alpha: float, calib: CalibrationResult, mc: MonteCarloParams, rng: RngStream
) -> TestDecision:
    scores = onesample_scores(x, f0)
    _check_calibration(calib, PrsKind.BETA_BOX_HIER, scores.size, alpha)
    evidence = onesample_plausibility(x, f0, calib.omega_star, mc, rng)
    return TestDecision(reject=evidence.plausibility < alpha, evidence=evidence, omega=calib.omega_star, alpha=alpha)


# forward simulation through the a-equations


def generate_data(model: ModelTag, params: ModelParams, n: int, rng: RngStream) -> ObservedData:
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    match model:
        case ModelTag.NORMAL:
            if params.theta is None:
                raise DomainError("normal model needs theta")
            u = rng.uniform(n)
            return ObservedData(model, params.theta + special.ndtri(u))
        case ModelTag.BERNOULLI:
            if params.theta is None or not 0.0 <= params.theta <= 1.0:
                raise DomainError(f"Bernoulli model needs theta in [0, 1], got {params.theta}")
            return ObservedData(model, (rng.uniform(n) <= params.theta).astype(np.float64))
        case ModelTag.HOMOGENEITY:
            return ObservedData(model, _exponential_sample(params, n, rng))
        case ModelTag.ONESAMPLE:
            if params.distribution is None:
                raise DomainError("one-sample model needs a distribution")
            return ObservedData(model, params.distribution.ppf(rng.uniform(n)))
    raise DomainError(f"unknown model: {model}")


def _exponential_sample(params: ModelParams, n: int, rng: RngStream) -> FloatArray:
    rates = np.asarray(params.rates if params.rates is not None else (1.0,) * n, dtype=np.float64)
    if rates.size != n or not np.all(rates > 0.0) or n < 2:
        raise DomainError(f"homogeneity model needs n >= 2 positive rates, got {rates.size} for n={n}")
    if params.via_pivot:
        # X_i = R P_i / Theta_i with R ~ Gamma(n, 1) and P ~ Unif(simplex)
        radius = sample_gamma(float(n), rng)
        return radius * sample_uniform_simplex(n, rng) / rates
    return sample_exponential(rates, rng)
