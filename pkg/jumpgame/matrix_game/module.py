import numpy as np

from jumpgame.exceptions import NonFiniteError, SaddleResidualError

from .objects import MatrixGameSolution

DEFAULT_TOL = 1e-9

# Pivoting threshold of the tableau; entries of the shifted matrix are >= 1
PIVOT_EPS = 1e-12


def check_saddle(M: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> float:
    """Largest gain either player gets from a pure deviation."""
    M = np.asarray(M, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if M.ndim != 2 or lam.shape != (M.shape[0],) or mu.shape != (M.shape[1],):
        raise ValueError(
            f"Strategies of sizes {lam.shape} and {mu.shape} "
            f"do not fit a matrix of shape {M.shape}."
        )
    row_payoffs = M @ mu
    column_payoffs = lam @ M
    current = float(lam @ row_payoffs)
    residual = max(
        float(np.max(row_payoffs)) - current,
        current - float(np.min(column_payoffs)),
    )
    return max(residual, 0.0)


def _pivot(T: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


def _solve_tableau(A: np.ndarray):
    """Maximize ``sum(y)`` subject to ``A y <= 1``, ``y >= 0`` for positive ``A``.

    Bland's rule fixes the pivot order, so the result is deterministic and
    cycling cannot happen. Returns the primal ``y`` and the dual ``x``
    (the reduced costs of the slack columns).
    """
    p, q = A.shape
    T = np.zeros((p + 1, q + p + 1))
    T[:p, :q] = A
    T[:p, q : q + p] = np.eye(p)
    T[:p, -1] = 1.0
    T[p, :q] = -1.0
    basis = list(range(q, q + p))

    while True:
        entering = np.flatnonzero(T[p, :-1] < -PIVOT_EPS)
        if not len(entering):
            break
        col = int(entering[0])
        column = T[:p, col]
        candidates = np.flatnonzero(column > PIVOT_EPS)
        ratios = T[candidates, -1] / column[candidates]
        best = ratios.min()
        tied = candidates[ratios <= best + PIVOT_EPS]
        row = int(min(tied, key=lambda i: basis[i]))
        _pivot(T, row, col)
        basis[row] = col

    y = np.zeros(q)
    for i, variable in enumerate(basis):
        if variable < q:
            y[variable] = T[i, -1]
    x = T[p, q : q + p].copy()
    return y, x


def _normalize(weights: np.ndarray) -> np.ndarray:
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


def _pure_saddle(M: np.ndarray):
    row_min = M.min(axis=1)
    col_max = M.max(axis=0)
    lower = row_min.max()
    upper = col_max.min()
    if upper > lower:
        return None
    i = int(np.argmax(row_min))
    j = int(np.argmin(col_max))
    lam = np.zeros(M.shape[0])
    mu = np.zeros(M.shape[1])
    lam[i] = 1.0
    mu[j] = 1.0
    return float(M[i, j]), lam, mu


def solve_matrix_game(M: np.ndarray, tol: float = DEFAULT_TOL) -> MatrixGameSolution:
    """Solve a zero-sum game where rows maximize and columns minimize.

    Games with a pure saddle point are answered directly; the rest go
    through the linear program of the shifted, positive matrix.

    Raises:
        NonFiniteError: The matrix contains NaN or infinite entries.
        SaddleResidualError: Round-off left a residual above
            ``tol * max(1, max|M|)``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or 0 in M.shape:
        raise ValueError(f"Expected a nonempty matrix, got shape {M.shape}.")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("Matrix game contains non-finite entries.")

    pure = _pure_saddle(M)
    if pure is not None:
        value, lam, mu = pure
        return MatrixGameSolution(value=value, lam=lam, mu=mu, residual=0.0)

    shift = float(M.min()) - 1.0
    y, x = _solve_tableau(M - shift)
    total = y.sum()
    lam = _normalize(x)
    mu = _normalize(y)
    value = 1.0 / total + shift

    residual = check_saddle(M, lam, mu)
    scale = max(1.0, float(np.max(np.abs(M))))
    if residual > tol * scale:
        raise SaddleResidualError(
            f"Saddle residual {residual} exceeds tolerance {tol * scale}."
        )
    return MatrixGameSolution(value=value, lam=lam, mu=mu, residual=residual)


def game_value(M: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    return solve_matrix_game(M, tol).value
