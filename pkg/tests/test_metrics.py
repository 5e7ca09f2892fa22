# tests/test_metrics.py
import itertools
from fractions import Fraction

import pytest

from app import metrics
from app.errors import IncompleteScenario

HALF = Fraction(1, 2)


@pytest.mark.parametrize("powers, expected", [
    ([40, 30, 20, 10], 2),
    ([10] * 5, 3),
    ([100], 1),
    ([1, 1, 98], 1),
])
def test_exact_coalition(powers, expected):
    assert metrics.exact_coalition(powers, HALF) == expected


def test_no_power_no_coalition():
    assert metrics.exact_coalition([0, 0], HALF) is None
    assert metrics.greedy_coalition([], HALF) is None


@pytest.mark.parametrize("powers", [[40, 30, 20, 10], [5, 5, 5, 5, 5, 5], [70, 1, 1, 1], [3, 9, 27, 81]])
def test_greedy_matches_exact_on_simple_sets(powers):
    assert metrics.greedy_coalition(powers, HALF) == metrics.exact_coalition(powers, HALF)


def test_capture_on_engine_state(sim):
    result = metrics.capture_coalition_size(sim.state)
    assert (result.size, result.exact, result.eligible_power) == (2, True, 100)


def test_unreachable_supermajority_has_no_coalition(sim):
    sim.state.params.supermajority_major = Fraction(1)
    assert metrics.capture_coalition_size(sim.state).size is None


def test_gini_known_values():
    assert metrics.gini([1, 0, 0, 0]) == Fraction(3, 4)
    assert metrics.gini([7, 7, 7]) == 0
    assert metrics.gini([]) == 0
    assert metrics.gini([0, 0]) == 0


def _pairwise_gini(xs):
    total = sum(xs)
    diff = sum(abs(a - b) for a, b in itertools.product(xs, repeat=2))
    return Fraction(diff, 2 * len(xs) * total)


@pytest.mark.parametrize("xs", [[40, 30, 20, 10], [1, 2, 3, 4, 100], [5, 0, 0, 9, 2]])
def test_gini_matches_pairwise_definition(xs):
    assert metrics.gini(xs) == _pairwise_gini(xs)


def test_power_gini_of_default_members(sim):
    assert metrics.power_gini(sim.state) == Fraction(1, 4)


# ------------------------------------------------------------
#                    карта требований
# ------------------------------------------------------------

def test_scoring_needs_finished_scenario(sim):
    with pytest.raises(IncompleteScenario):
        metrics.score_requirements(sim.state, sim.engine.records)


def test_empty_scenario_is_degenerate(sim):
    sim.do("scenario_end", quiescent=True, drain_ticks=0)
    card = metrics.score_requirements(sim.state, sim.engine.records)
    assert card.degenerate
    assert set(card.verdicts().values()) == {metrics.PARTIAL}


def test_activity_is_not_degenerate(sim):
    pid = sim.propose("alice", {"type": "Grant", "to": "bob", "amount": 5})
    sim.vote(pid, "alice", "bob")
    sim.to(9)
    sim.do("scenario_end", quiescent=True, drain_ticks=0)
    card = metrics.score_requirements(sim.state, sim.engine.records)
    assert not card.degenerate
    assert card.r5.metrics["capture_coalition_size"] == 2
    # коалиция из двух меньше порога по умолчанию
    assert card.r5.verdict == metrics.UNMET
