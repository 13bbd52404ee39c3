import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from jumpgame.exceptions import NonFiniteError
from jumpgame.matrix_game.module import check_saddle, game_value, solve_matrix_game

PENNIES = np.array([[1.0, -1.0], [-1.0, 1.0]])


def oracle_value(M: np.ndarray) -> float:
    """Value of the row player's linear program, solved by HiGHS."""
    A, B = M.shape
    c = np.zeros(A + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M.T, np.ones((B, 1))])
    A_eq = np.hstack([np.ones((1, A)), np.zeros((1, 1))])
    result = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.zeros(B),
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * A + [(None, None)],
        method="highs",
    )
    assert result.success
    return -result.fun


matrices = st.tuples(st.integers(1, 4), st.integers(1, 4)).flatmap(
    lambda shape: arrays(
        np.float64,
        shape,
        elements=st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False),
    )
)


def test_one_by_one():
    solution = solve_matrix_game(np.array([[0.0]]))
    assert solution.value == 0.0
    assert solution.lam.tolist() == [1.0]
    assert solution.mu.tolist() == [1.0]


def test_matching_pennies():
    solution = solve_matrix_game(PENNIES)
    assert solution.value == pytest.approx(0.0, abs=1e-12)
    assert solution.lam == pytest.approx([0.5, 0.5])
    assert solution.mu == pytest.approx([0.5, 0.5])


def test_equalizing_two_by_two():
    solution = solve_matrix_game(np.array([[3.0, 1.0], [0.0, 2.0]]))
    assert solution.value == pytest.approx(1.5, abs=1e-12)
    assert solution.lam == pytest.approx([0.5, 0.5])
    assert solution.mu == pytest.approx([0.25, 0.75])
    assert solution.residual <= 1e-9


def test_constant_game():
    solution = solve_matrix_game(np.full((2, 2), 5.0))
    assert solution.value == 5.0
    assert solution.residual == 0.0


def test_pure_saddle():
    solution = solve_matrix_game(np.array([[4.0, 2.0], [1.0, 0.0]]))
    assert solution.value == 2.0
    assert solution.lam.tolist() == [1.0, 0.0]
    assert solution.mu.tolist() == [0.0, 1.0]


def test_check_saddle_exact():
    assert check_saddle(PENNIES, np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0


def test_check_saddle_deviation():
    residual = check_saddle(PENNIES, np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    assert residual == pytest.approx(1.0)


def test_check_saddle_dimension_mismatch():
    with pytest.raises(ValueError):
        check_saddle(PENNIES, np.array([1.0]), np.array([0.5, 0.5]))


def test_non_finite_entries():
    with pytest.raises(NonFiniteError):
        solve_matrix_game(np.array([[1.0, np.nan]]))
    with pytest.raises(NonFiniteError):
        solve_matrix_game(np.array([[np.inf]]))


def test_empty_matrix():
    with pytest.raises(ValueError):
        solve_matrix_game(np.zeros((0, 2)))


def test_solution_dump():
    dumped = solve_matrix_game(np.array([[3.0, 1.0], [0.0, 2.0]])).dump()
    assert sorted(dumped) == ["lambda", "mu", "residual", "value"]
    assert dumped["mu"] == pytest.approx([0.25, 0.75])


def test_random_matrices_against_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        A, B = rng.integers(1, 5, size=2)
        M = rng.uniform(-5.0, 5.0, (A, B))
        solution = solve_matrix_game(M)
        assert solution.value == pytest.approx(oracle_value(M), abs=1e-6)
        assert check_saddle(M, solution.lam, solution.mu) <= 1e-9 * 5.0


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_residual_contract(M):
    solution = solve_matrix_game(M)
    assert solution.residual <= 1e-9 * max(1.0, np.max(np.abs(M)))
    assert np.all(solution.lam >= 0) and solution.lam.sum() == pytest.approx(1.0)
    assert np.all(solution.mu >= 0) and solution.mu.sum() == pytest.approx(1.0)
    assert solution.value == pytest.approx(
        float(solution.lam @ M @ solution.mu), abs=1e-8
    )


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(-5.0, 5.0))
def test_shift_covariance(M, c):
    shifted = solve_matrix_game(M + c)
    assert shifted.value == pytest.approx(game_value(M) + c, abs=1e-9)
    assert check_saddle(M, shifted.lam, shifted.mu) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(0.1, 10.0))
def test_positive_scaling(M, c):
    assert game_value(c * M) == pytest.approx(c * game_value(M), abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_duality(M):
    assert game_value(-M.T) == pytest.approx(-game_value(M), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(matrices, st.floats(0.0, 3.0))
def test_dominated_row_changes_nothing(M, gap):
    extended = np.vstack([M, M[0] - gap])
    assert game_value(extended) == pytest.approx(game_value(M), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_value_between_pure_bounds(M):
    value = game_value(M)
    assert np.max(np.min(M, axis=1)) - 1e-9 <= value
    assert value <= np.min(np.max(M, axis=0)) + 1e-9


def test_residual_is_relative_to_payoff_scale():
    rng = np.random.default_rng(7)
    for _ in range(50):
        M = rng.uniform(-5.0, 5.0, (4, 4)) * 1e4
        solution = solve_matrix_game(M)
        assert solution.residual <= 1e-9 * np.max(np.abs(M))
        assert solution.residual == check_saddle(M, solution.lam, solution.mu)
