import random

import numpy as np
import pytest

from bruvkit.assignment import min_cost_assignment

from oracles import naive_min_cost_assignment


def test_two_by_two_prefers_lower_total():
    # costs from IoUs 0.8/0.4/0.5/0.7: diagonal total 0.5 beats 1.1
    cost = np.array([[0.2, 0.6], [0.5, 0.3]])
    assert min_cost_assignment(cost) == [(0, 0), (1, 1)]


def test_tie_breaks_lexicographically():
    cost = np.ones((2, 2)) * 0.5
    assert min_cost_assignment(cost) == [(0, 0), (1, 1)]
    # make the anti-diagonal strictly better; tie-break should not override
    cost = np.array([[0.5, 0.1], [0.1, 0.5]])
    assert min_cost_assignment(cost) == [(0, 1), (1, 0)]


def test_rectangular_shapes():
    assert min_cost_assignment(np.zeros((3, 2))) == [(0, 0), (1, 1)]
    assert min_cost_assignment(np.zeros((2, 3))) == [(0, 0), (1, 1)]
    # cheaper for row 0 to take the last column
    cost = np.array([[1.0, 1.0, 0.0]])
    assert min_cost_assignment(cost) == [(0, 2)]


def test_skipped_row_when_rows_exceed_cols():
    # row 0 is expensive everywhere; optimum uses rows 1 and 2
    cost = np.array([[9.0, 9.0], [0.0, 5.0], [5.0, 0.0]])
    assert min_cost_assignment(cost) == [(1, 0), (2, 1)]


def test_empty():
    assert min_cost_assignment(np.zeros((0, 3))) == []
    assert min_cost_assignment(np.zeros((3, 0))) == []


@pytest.mark.parametrize("trial", range(50))
def test_matches_bruteforce_on_random_matrices(trial):
    rng = random.Random(1000 + trial)
    n_rows = rng.randint(1, 5)
    n_cols = rng.randint(1, 5)
    # quantized costs make exact ties common, exercising the tie-break
    cost = [[rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]) for _ in range(n_cols)] for _ in range(n_rows)]
    expected = naive_min_cost_assignment(cost)
    assert min_cost_assignment(np.array(cost)) == expected
