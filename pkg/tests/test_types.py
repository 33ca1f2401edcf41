from __future__ import annotations

import numpy as np
import pytest

from wbinfer.errors import DomainError
from wbinfer.types import UNIFORM
from wbinfer.types import Assertion
from wbinfer.types import AssertionKind
from wbinfer.types import BeliefPair
from wbinfer.types import Distribution


def test_threshold_assertions_hold_as_predicates() -> None:
    assert Assertion.le(0.5).holds(0.5)
    assert not Assertion.le(0.5).holds(0.6)
    assert Assertion.gt(0.5).holds(0.6)
    assert not Assertion.gt(0.5).holds(0.5)
    assert Assertion.singleton(0.5).holds(0.5)
    assert not Assertion.singleton(0.5).holds(0.4)


def test_complement_holds_exactly_where_the_assertion_fails() -> None:
    for assertion in (Assertion.le(1.0), Assertion.gt(-2.0)):
        for theta in np.linspace(-3.0, 3.0, 13):
            assert assertion.holds(theta) != assertion.complement().holds(theta)
    with pytest.raises(DomainError):
        Assertion.singleton(0.0).complement()


def test_homogeneity_assertion_holds_for_equal_rates() -> None:
    assertion = Assertion(AssertionKind.HOMOGENEITY)
    assert assertion.holds([2.0, 2.0, 2.0])
    assert assertion.holds(np.ones(5))
    assert not assertion.holds([1.0, 1.0, 3.0])


def test_cdf_assertion_holds_for_the_target_only() -> None:
    assertion = Assertion(AssertionKind.CDF_EQUALS_F0, target=UNIFORM)
    assert assertion.holds(Distribution("uniform", (0.0, 1.0)))
    assert not assertion.holds(Distribution("beta", (0.8, 0.8)))


@pytest.mark.parametrize(
    "kwargs",
    [{"kind": AssertionKind.LE_THETA}, {"kind": AssertionKind.SINGLETON}, {"kind": AssertionKind.CDF_EQUALS_F0}],
)
def test_assertions_need_their_parameters(kwargs: dict[str, AssertionKind]) -> None:
    with pytest.raises(DomainError):
        Assertion(**kwargs)


def test_belief_pair_complement() -> None:
    pair = BeliefPair(belief=0.2, plausibility=0.7, belief_se=0.01, plausibility_se=0.02)
    complement = pair.complement()
    assert complement.belief == pytest.approx(0.3)
    assert complement.plausibility == pytest.approx(0.8)
    assert (complement.belief_se, complement.plausibility_se) == (0.02, 0.01)
