import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from poseval.assignment import assignment_cost, brute_force_lap, solve_lap
from poseval.exceptions import NonFiniteCost, TooLarge


def test_two_by_two():
    res = solve_lap([[4, 1], [2, 8]])
    assert list(res.permutation) == [1, 0] and res.total_cost == 3


def test_three_by_three_example():
    res = solve_lap([[1, 2, 3], [2, 4, 6], [3, 6, 9]])
    assert list(res.permutation) == [2, 1, 0] and res.total_cost == 10
    assert brute_force_lap([[1, 2, 3], [2, 4, 6], [3, 6, 9]]).total_cost == 10


def test_single_entry():
    res = solve_lap([[2.5]])
    assert list(res.permutation) == [0] and res.total_cost == 2.5


def test_ties_resolve_to_identity():
    res = solve_lap(np.ones((6, 6)))
    assert list(res.permutation) == list(range(6))


def test_errors():
    with pytest.raises(NonFiniteCost):
        solve_lap([[1, np.nan], [0, 1]])
    with pytest.raises(NonFiniteCost):
        solve_lap([[1, np.inf], [0, 1]])
    with pytest.raises(ValueError):
        solve_lap(np.ones((2, 3)))
    with pytest.raises(TooLarge):
        brute_force_lap(np.ones((10, 10)))


square = st.integers(1, 7).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(0, 10, allow_subnormal=False)))
int_square = st.integers(1, 7).flatmap(lambda n: arrays(np.int64, (n, n), elements=st.integers(0, 3)))


@given(square)
def test_matches_brute_force(C):
    res, ref = solve_lap(C), brute_force_lap(C)
    assert res.total_cost == ref.total_cost
    assert assignment_cost(C, res.permutation) == res.total_cost


@given(int_square)
def test_ties_match_brute_force_exactly(C):
    res, ref = solve_lap(C), brute_force_lap(C)
    assert res.total_cost == ref.total_cost
    assert list(res.permutation) == list(ref.permutation)


@given(square, st.integers(0, 6), st.floats(0, 5))
def test_row_shift_invariance(C, row, shift):
    row %= C.shape[0]
    base = solve_lap(C)
    D = C.copy()
    D[row] += shift
    shifted = solve_lap(D)
    assert shifted.total_cost - shift == pytest.approx(base.total_cost, abs=1e-9)
    assert assignment_cost(C, shifted.permutation) == pytest.approx(base.total_cost, abs=1e-9)


@pytest.mark.parametrize("n", [20, 100, 300])
def test_matches_scipy_on_larger_matrices(n):
    rng = np.random.default_rng(n)
    C = rng.uniform(0, 10, (n, n))
    r, c = linear_sum_assignment(C)
    assert solve_lap(C).total_cost == pytest.approx(C[r, c].sum(), rel=1e-12)


def test_permutation_is_bijection():
    C = np.random.default_rng(1).uniform(0, 1, (50, 50))
    assert sorted(solve_lap(C).permutation) == list(range(50))


def test_large_solve_is_fast():
    rng = np.random.default_rng(0)
    solve_lap(rng.uniform(0, 10, (5, 5)))
    C = rng.uniform(0, 10, (500, 500))
    t0 = time.perf_counter()
    solve_lap(C)
    assert time.perf_counter() - t0 < 0.1
