import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from scanmesh.assignment import greedy_match, hungarian, vertex_cost_matrix


def brute_force(cost):
    """Exhaustive optimum over all injective maps of the shorter side."""
    n, m = cost.shape
    if n <= m:
        return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return brute_force(cost.T)


def test_diagonal_zeros():
    a = hungarian([[0, 5], [5, 0]])
    assert a.mapping == {0: 0, 1: 1}
    assert a.total_cost == 0


def test_two_by_two_picks_cheaper_permutation():
    a = hungarian([[1, 2], [3, 1]])
    assert a.mapping == {0: 0, 1: 1}
    assert a.total_cost == 2


def test_greedy_coincides_on_easy_case():
    a = greedy_match([[1, 2], [3, 1]])
    assert a.mapping == {0: 0, 1: 1}
    assert a.total_cost == 2


def test_greedy_collapses_where_hungarian_does_not():
    cost = [[1, 1.1], [1.05, 100]]
    g, h = greedy_match(cost), hungarian(cost)
    assert g.mapping == {0: 0, 1: 1} and g.total_cost == pytest.approx(101)
    assert h.mapping == {0: 1, 1: 0} and h.total_cost == pytest.approx(2.15)


def test_greedy_breaks_ties_by_row_then_column():
    a = greedy_match(np.ones((3, 3)))
    assert a.mapping == {0: 0, 1: 1, 2: 2}


def test_identical_point_sets_map_to_identity():
    p = np.random.default_rng(0).normal(size=(20, 3))
    for match in (hungarian, greedy_match):
        a = match(vertex_cost_matrix(p, p))
        assert a.mapping == {i: i for i in range(20)}
        assert a.total_cost == 0


def test_empty_matrix():
    for match in (hungarian, greedy_match):
        a = match(np.zeros((0, 4)))
        assert len(a) == 0 and a.total_cost == 0


def test_non_finite_costs_are_rejected():
    with pytest.raises(ValueError):
        hungarian([[0, np.inf], [1, 2]])


@pytest.mark.parametrize("n", range(2, 7))
def test_hungarian_equals_brute_force(n):
    rng = np.random.default_rng(n)
    for _ in range(60):
        cost = rng.random((n, n))
        assert hungarian(cost).total_cost == pytest.approx(brute_force(cost), abs=1e-12)


@pytest.mark.parametrize("shape", [(2, 5), (5, 2), (3, 6), (6, 4)])
def test_rectangular_matches_brute_force(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(30):
        cost = rng.integers(0, 5, size=shape).astype(float)
        a = hungarian(cost)
        assert len(a) == min(shape)
        assert len(set(a.rows.tolist())) == len(set(a.cols.tolist())) == min(shape)
        assert a.total_cost == pytest.approx(brute_force(cost))


@pytest.mark.parametrize("n", [20, 64, 150])
def test_hungarian_agrees_with_scipy_at_larger_n(n):
    rng = np.random.default_rng(n)
    cost = rng.normal(size=(n, n + 3))
    r, c = linear_sum_assignment(cost)
    assert hungarian(cost).total_cost == pytest.approx(cost[r, c].sum(), abs=1e-9)


small_costs = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-50, 50, allow_nan=False)))


@settings(max_examples=150, deadline=None)
@given(small_costs)
def test_hungarian_never_worse_than_greedy(cost):
    assert hungarian(cost).total_cost <= greedy_match(cost).total_cost + 1e-9


@settings(max_examples=80, deadline=None)
@given(small_costs, st.floats(0.01, 100))
def test_scaling_keeps_the_assignment(cost, lam):
    a, b = hungarian(cost), hungarian(cost * lam)
    assert b.total_cost == pytest.approx(a.total_cost * lam, rel=1e-9, abs=1e-6)
    assert cost[b.rows, b.cols].sum() == pytest.approx(a.total_cost, rel=1e-9, abs=1e-6)


def test_target_of_marks_unmatched_rows():
    a = hungarian(np.array([[5.0], [1.0], [3.0]]))
    assert a.target_of().tolist() == [-1, 0, -1]


def test_cost_matrix_examples():
    assert vertex_cost_matrix([[0, 0, 0]], [[1, 2, 3]]).tolist() == [[6.0]]
    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
    assert np.array_equal(vertex_cost_matrix(p, t), vertex_cost_matrix(t, p).T)
    assert np.all(np.diag(vertex_cost_matrix(p, p)) == 0)
