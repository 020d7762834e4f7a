import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from crowdchain.reputation import (
    NoTrustedReference,
    ReputationLedger,
    filter_reports,
    inclusion_probability,
    liar_influence_bound,
    simulate_liar,
    update_reputation,
)


@pytest.mark.parametrize("rho,p", [(0, Fraction(0)), (1, Fraction(1, 2)), (99, Fraction(99, 100))])
def test_inclusion_probability(rho, p):
    assert inclusion_probability(rho) == p


def test_inclusion_rejects_negative():
    with pytest.raises(ValueError):
        inclusion_probability(-1)


@given(st.fractions(0, 1000))
def test_inclusion_in_unit_interval(rho):
    p = inclusion_probability(rho)
    assert 0 <= p < 1
    assert inclusion_probability(rho + 1) > p


def test_update_rule():
    led = ReputationLedger({1: Fraction(4), 2: Fraction(4), 3: Fraction(0)}, {0})
    new = update_reputation(led, {0: 10.0, 1: 10.4, 2: 30.0, 3: 9.0}, [10.0], tolerance=1.0)
    assert new.rho(1) == 5
    assert new.rho(2) == 2
    assert new.rho(3) == 1
    assert new.rho(0) == 0  # trusted users are not scored
    assert led.rho(1) == 4  # input untouched


def test_reference_is_trusted_mean():
    led = ReputationLedger({1: Fraction(2)}, {0, 9})
    new = update_reputation(led, {1: 5.0}, [4.0, 6.0], tolerance=0.5)
    assert new.rho(1) == 3


def test_no_trusted_reference():
    led = ReputationLedger({1: Fraction(2)})
    with pytest.raises(NoTrustedReference):
        update_reputation(led, {1: 5.0}, [], tolerance=1)


def test_only_trusted_reports_is_noop():
    led = ReputationLedger({1: Fraction(2)}, {0})
    assert update_reputation(led, {0: 1.0}, [], tolerance=1).scores == led.scores


def test_filter_reports_frequencies():
    led = ReputationLedger({1: Fraction(0), 2: Fraction(1), 3: Fraction(3)}, {0})
    rng = random.Random(0)
    counts = {u: 0 for u in range(4)}
    n = 4000
    for _ in range(n):
        for u, _ in filter_reports(led, [(u, 0.0) for u in range(4)], rng):
            counts[u] += 1
    assert counts[0] == n and counts[1] == 0
    for u, p in ((2, 0.5), (3, 0.75)):
        assert abs(counts[u] / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_liar_trace_matches_closed_form():
    tr = simulate_liar(50, initial_rho=8, seed=1)
    assert tr.rho[:4] == [8, 4, 2, 1]
    assert tr.expected[-1] == liar_influence_bound(8, 50)
    assert tr.included[-1] <= 50


def test_liar_from_zero_is_never_included():
    tr = simulate_liar(50, initial_rho=0, seed=0)
    assert tr.included[-1] == 0
    assert tr.expected[-1] == 0


def test_honest_reporter_gains():
    tr = simulate_liar(5, initial_rho=0, lie=0.5, truth=0.0, tolerance=1.0)
    assert tr.rho == [0, 1, 2, 3, 4]


def test_ledger_to_dict():
    d = ReputationLedger({2: Fraction(1, 2)}, {0}).to_dict()
    assert d == {"rule": "plus_one_or_halve", "scores": {"2": "1/2"}, "trusted": [0]}
