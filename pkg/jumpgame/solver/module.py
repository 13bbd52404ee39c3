import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from jumpgame.exceptions import ConvergenceError, GridMismatchError
from jumpgame.matrix_game.module import DEFAULT_TOL as MATRIX_TOL
from jumpgame.matrix_game.module import solve_matrix_game
from jumpgame.model.module import uniformized_block
from jumpgame.model.objects import DriftCertificate, GameModel, TimePartition

from .objects import (
    MarkovPolicy,
    Method,
    Side,
    SolveDiagnostics,
    SolveResult,
    StageForm,
    ValueGrid,
)

solver_log = logging.getLogger("jumpgame.solver")

DEFAULT_GRID = 1000
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10000

# Factor between the declared tolerance and the allowed solver disagreement
AGREEMENT_FACTOR = 10.0


class StatePool:
    """Runs one callable per state, in parallel when ``workers > 1``.

    Results always come back in state order, so outputs do not depend
    on the number of workers.
    """

    def __init__(self, n_states: int, workers: int = 1):
        self.n_states = n_states
        self.workers = workers
        self._executor: Optional[ThreadPoolExecutor] = None

    def __enter__(self):
        if self.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def map(self, func: Callable[[int], object]) -> list:
        if self._executor is None:
            return [func(x) for x in range(self.n_states)]
        return list(self._executor.map(func, range(self.n_states)))


class StageBlocks:
    """Per-cell, per-state reward and rate blocks of a model."""

    def __init__(self, model: GameModel):
        self.model = model
        self.reward = model.r
        self.rates = model.q
        self.uniformized = tuple(
            tuple(
                float(model.m[x]) * uniformized_block(model, k, x)
                for x in range(model.n_states)
            )
            for k in range(model.n_cells)
        )

    def matrix(
        self, k: int, x: int, u_slice: np.ndarray, form: StageForm
    ) -> np.ndarray:
        if form is StageForm.UNIFORMIZED:
            return self.reward[k][x] + self.uniformized[k][x] @ u_slice
        return self.reward[k][x] + self.rates[k][x] @ u_slice

    def value(
        self, k: int, x: int, u_slice: np.ndarray, form: StageForm, tol: float
    ) -> float:
        return solve_matrix_game(self.matrix(k, x, u_slice, form), tol).value


def build_grid(partition: TimePartition, n_intervals: int = DEFAULT_GRID) -> np.ndarray:
    """Uniform grid inside each cell, about ``n_intervals`` intervals in total.

    Every cell gets at least one interval and all cell boundaries are nodes.
    """
    if n_intervals < 2:
        raise ValueError("A grid needs at least two intervals.")
    pieces = []
    T = partition.horizon
    for left, right in zip(partition.boundaries, partition.boundaries[1:]):
        count = max(1, int(round(n_intervals * (right - left) / T)))
        nodes = np.linspace(left, right, count + 1)
        nodes[0], nodes[-1] = left, right
        pieces.append(nodes if not pieces else nodes[1:])
    return np.concatenate(pieces)


def check_grid(model: GameModel, grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise GridMismatchError("A grid needs at least two points.")
    if grid[0] != 0.0 or grid[-1] != model.horizon:
        raise GridMismatchError(f"Grid must run from 0 to {model.horizon}.")
    if np.any(np.diff(grid) <= 0):
        raise GridMismatchError("Grid points must increase strictly.")
    for boundary in model.partition.boundaries:
        if not np.any(np.isclose(grid, boundary, rtol=0.0, atol=1e-12)):
            raise GridMismatchError(f"Grid misses the cell boundary {boundary}.")
    return grid


def interval_cells(model: GameModel, grid: np.ndarray) -> List[int]:
    """Cell of each grid interval, by its left endpoint."""
    return [model.cell_of(t) for t in grid[:-1]]


def seed_u0(
    model: GameModel, cert: DriftCertificate, grid: Sequence[float]
) -> ValueGrid:
    """Explicit upper envelope the value iteration starts from."""
    grid = check_grid(model, grid)
    remaining = model.horizon - grid
    growth = np.exp(cert.c0 * remaining)
    profile = (cert.M0 / cert.c0) * (cert.c0 * growth + growth - 1.0)
    return ValueGrid(
        grid=grid, values=np.outer(profile, cert.w0), certificate=cert
    )


def stage_matrix(
    model: GameModel, u: ValueGrid, t: float, x: int, form: StageForm
) -> np.ndarray:
    """Payoff matrix of the stage game at ``(t, x)`` against the value ``u``.

    Rows are maximizer actions, columns minimizer actions, in model order.
    """
    if not 0.0 <= t <= model.horizon:
        raise ValueError(f"Time {t} lies outside [0, {model.horizon}].")
    k = model.cell_of(t)
    if form is StageForm.UNIFORMIZED:
        rates = float(model.m[x]) * uniformized_block(model, k, x)
    else:
        rates = model.q[k][x]
    return model.r[k][x] + rates @ u.interpolate(t)


def _apply_G(
    blocks: StageBlocks,
    grid: np.ndarray,
    cells: List[int],
    values: np.ndarray,
    pool: StatePool,
    tol: float,
) -> np.ndarray:
    model = blocks.model
    T = model.horizon
    N = len(grid) - 1

    def column(x: int) -> np.ndarray:
        m = float(model.m[x])
        g = float(model.terminal[x])
        cache = {}

        def integrand(node: int, k: int) -> float:
            if (node, k) not in cache:
                cache[node, k] = blocks.value(
                    k, x, values[node], StageForm.UNIFORMIZED, tol
                )
            return cache[node, k]

        out = np.empty(N + 1)
        out[N] = g
        integral = 0.0
        for j in range(N - 1, -1, -1):
            k = cells[j]
            step = grid[j + 1] - grid[j]
            decay = math.exp(-m * step)
            # trapezoid on [t_j, t_{j+1}] with the cell of the left endpoint
            integral = decay * integral + 0.5 * step * (
                integrand(j, k) + decay * integrand(j + 1, k)
            )
            out[j] = math.exp(-m * (T - grid[j])) * g + integral
        return out

    return np.column_stack(pool.map(column))


def apply_G(
    model: GameModel, u: ValueGrid, matrix_tol: float = MATRIX_TOL, workers: int = 1
) -> ValueGrid:
    """One application of the uniformized fixed-point operator.

    The integral runs over the grid nodes in ``[t_i, T]`` with the composite
    trapezoidal rule; the terminal slice is the terminal reward.
    """
    grid = check_grid(model, u.grid)
    blocks = StageBlocks(model)
    with StatePool(model.n_states, workers) as pool:
        values = _apply_G(
            blocks, grid, interval_cells(model, grid), u.values, pool, matrix_tol
        )
    return ValueGrid(grid=grid, values=values, certificate=u.certificate)


def value_iterate(
    model: GameModel,
    cert: DriftCertificate,
    grid: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    matrix_tol: float = MATRIX_TOL,
    workers: int = 1,
) -> Tuple[ValueGrid, SolveDiagnostics]:
    """Iterate the operator from the explicit envelope until successive
    iterates differ by at most ``tol`` in the sup norm.

    Raises:
        ValueError: Non-positive ``tol`` or ``max_iter``.
        ConvergenceError: ``max_iter`` iterations without convergence;
            carries the last iterate and the diagnostics.
    """
    if tol <= 0:
        raise ValueError("Tolerance must be positive.")
    if max_iter < 1:
        raise ValueError("Value iteration needs at least one iteration.")
    seed = seed_u0(model, cert, grid)
    grid = seed.grid
    cells = interval_cells(model, grid)
    blocks = StageBlocks(model)
    diagnostics = SolveDiagnostics()
    current = seed.values

    solver_log.info(
        f"Value iteration on {len(grid) - 1} intervals, {model.n_states} states."
    )
    with StatePool(model.n_states, workers) as pool:
        for _ in range(max_iter):
            following = _apply_G(blocks, grid, cells, current, pool, matrix_tol)
            change = following - current
            diagnostics.iterations += 1
            diagnostics.deltas.append(float(np.max(np.abs(change))))
            diagnostics.monotonicity_violations.append(
                float(max(np.max(change), 0.0))
            )
            diagnostics.envelope_violations.append(
                float(max(np.max(np.abs(following) - seed.values), 0.0))
            )
            solver_log.debug(
                f"Iteration {diagnostics.iterations}: "
                f"delta {diagnostics.deltas[-1]:.3e}."
            )
            current = following
            if diagnostics.deltas[-1] <= tol:
                diagnostics.converged = True
                break

        residual = _apply_G(blocks, grid, cells, current, pool, matrix_tol) - current
        diagnostics.fixed_point_residual = float(np.max(np.abs(residual)))

    values = ValueGrid(grid=grid, values=current, certificate=cert)
    if not diagnostics.converged:
        solver_log.warning(
            f"Value iteration did not converge in {max_iter} iterations, "
            f"last delta {diagnostics.deltas[-1]:.3e}."
        )
        raise ConvergenceError(
            f"No convergence within {max_iter} iterations.",
            values=values,
            diagnostics=diagnostics,
        )
    solver_log.info(
        f"Value iteration converged after {diagnostics.iterations} iterations, "
        f"fixed-point residual {diagnostics.fixed_point_residual:.3e}."
    )
    return values, diagnostics


def isaacs_backward(
    model: GameModel,
    grid: Sequence[float],
    matrix_tol: float = MATRIX_TOL,
    workers: int = 1,
) -> ValueGrid:
    """Integrate the Isaacs equation backward from the terminal reward.

    Classical RK4 on every grid interval; the cell of the interval's left
    endpoint is used for all four stages, so no step straddles a boundary.
    """
    grid = check_grid(model, grid)
    cells = interval_cells(model, grid)
    blocks = StageBlocks(model)
    N = len(grid) - 1
    values = np.empty((N + 1, model.n_states))
    values[N] = model.terminal

    with StatePool(model.n_states, workers) as pool:

        def stage_values(k: int, v: np.ndarray) -> np.ndarray:
            return np.array(
                pool.map(
                    lambda x: blocks.value(k, x, v, StageForm.GENERATOR, matrix_tol)
                )
            )

        for i in range(N - 1, -1, -1):
            k = cells[i]
            h = grid[i + 1] - grid[i]
            v = values[i + 1]
            k1 = stage_values(k, v)
            k2 = stage_values(k, v + 0.5 * h * k1)
            k3 = stage_values(k, v + 0.5 * h * k2)
            k4 = stage_values(k, v + h * k3)
            values[i] = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    solver_log.info(f"Isaacs integration finished, u(0) = {values[0].tolist()}.")
    return ValueGrid(grid=grid, values=values, certificate=model.certificate)


def extract_policies(
    model: GameModel, u: ValueGrid, matrix_tol: float = MATRIX_TOL, workers: int = 1
) -> Tuple[MarkovPolicy, MarkovPolicy]:
    """Saddle strategies of the generator-form stage game on every grid
    interval, for both players.

    The stage game of interval ``i`` uses the cell and the value slice of
    its left endpoint; the strategies stay constant on ``[t_i, t_{i+1})``.
    """
    grid = check_grid(model, u.grid)
    cells = interval_cells(model, grid)
    blocks = StageBlocks(model)
    maximizer, minimizer = [], []
    with StatePool(model.n_states, workers) as pool:
        for i, k in enumerate(cells):
            left = u.values[i]
            solutions = pool.map(
                lambda x: solve_matrix_game(
                    blocks.matrix(k, x, left, StageForm.GENERATOR), matrix_tol
                )
            )
            maximizer.append([s.lam for s in solutions])
            minimizer.append([s.mu for s in solutions])
    return (
        MarkovPolicy(Side.MAXIMIZER, grid, tuple(cells), maximizer),
        MarkovPolicy(Side.MINIMIZER, grid, tuple(cells), minimizer),
    )


def estimate_quadrature_slack(
    model: GameModel,
    cert: DriftCertificate,
    n_intervals: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    matrix_tol: float = MATRIX_TOL,
    workers: int = 1,
    fine: Optional[ValueGrid] = None,
) -> float:
    """Discretization error estimate of value iteration by grid halving.

    The trapezoidal pipeline is second order, so a third of the change
    between the ``N/2`` and ``N`` solutions estimates the error at ``N``.
    An already computed ``N`` solution can be passed as ``fine``.
    """
    if fine is None:
        fine, _ = value_iterate(
            model,
            cert,
            build_grid(model.partition, n_intervals),
            tol,
            max_iter,
            matrix_tol,
            workers,
        )
    coarse, _ = value_iterate(
        model,
        cert,
        build_grid(model.partition, max(2, n_intervals // 2)),
        tol,
        max_iter,
        matrix_tol,
        workers,
    )
    difference = max(
        float(np.max(np.abs(fine.interpolate(t) - coarse.values[i])))
        for i, t in enumerate(coarse.grid)
    )
    return difference / 3.0


def solve(
    model: GameModel,
    cert: DriftCertificate,
    grid: Sequence[float],
    method: Method = Method.BOTH,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    matrix_tol: float = MATRIX_TOL,
    workers: int = 1,
) -> SolveResult:
    """Run the selected solver(s); with ``Method.BOTH`` also cross-check them.

    The value-iteration result is the primary solution whenever it is computed.
    """
    grid = check_grid(model, grid)
    result = None
    if method in (Method.ITERATE, Method.BOTH):
        iterate, diagnostics = value_iterate(
            model, cert, grid, tol, max_iter, matrix_tol, workers
        )
        result = SolveResult(values=iterate, iterate=iterate, diagnostics=diagnostics)
    if method in (Method.ODE, Method.BOTH):
        ode = isaacs_backward(model, grid, matrix_tol, workers)
        if result is None:
            result = SolveResult(values=ode)
        result.ode = ode
    if method is Method.BOTH:
        result.gap = float(np.max(np.abs(result.iterate.values - result.ode.values)))
        result.quadrature_slack = estimate_quadrature_slack(
            model,
            cert,
            len(grid) - 1,
            tol,
            max_iter,
            matrix_tol,
            workers,
            fine=result.iterate,
        )
        result.gap_bound = AGREEMENT_FACTOR * (tol + result.quadrature_slack)
        log = solver_log.info if result.agreed else solver_log.warning
        log(
            f"Solver cross-check gap {result.gap:.3e}, "
            f"allowed {result.gap_bound:.3e}."
        )
    return result
