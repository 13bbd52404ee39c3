import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from jumpgame.exceptions import GridMismatchError
from jumpgame.model.module import payoff_bound, uniformized_block
from jumpgame.model.objects import DriftCertificate, GameModel
from jumpgame.solver.module import check_grid, interval_cells
from jumpgame.solver.objects import MarkovPolicy, Side, ValueGrid

from .objects import (
    DriftReport,
    DynkinReport,
    EvaluationSetup,
    PayoffEstimate,
    SaddleCertificate,
    Trajectory,
)

dynamics_log = logging.getLogger("jumpgame.dynamics")

DEFAULT_PATHS = 10000
DEFAULT_SADDLE_TOL = 1e-3


def _policy_indices(
    model: GameModel, policy: MarkovPolicy, grid: np.ndarray
) -> np.ndarray:
    """Policy interval of every evaluation interval.

    The evaluation grid has to contain every node of the policy grid.
    """
    for t in policy.grid:
        if not np.any(np.isclose(grid, t, rtol=0.0, atol=1e-12)):
            raise GridMismatchError(
                f"The {policy.side.value} policy node {t} is not on the "
                "evaluation grid."
            )
    if not np.isclose(policy.grid[-1], grid[-1], rtol=0.0, atol=1e-12):
        raise GridMismatchError("Policy and evaluation grids end at different times.")
    nudge = 1e-12 * max(1.0, model.horizon)
    indices = np.searchsorted(policy.grid, grid[:-1] + nudge, side="right") - 1
    return np.clip(indices, 0, policy.n_intervals - 1)


def _strategy(
    model: GameModel, policy: MarkovPolicy, i: int, x: int, k: int
) -> np.ndarray:
    vector = policy.strategy[i][x]
    actions = (
        model.actions_max[k][x]
        if policy.side is Side.MAXIMIZER
        else model.actions_min[k][x]
    )
    if len(vector) != len(actions):
        raise GridMismatchError(
            f"The {policy.side.value} strategy at index {i}, state "
            f"'{model.states[x]}' does not match the admissible actions of cell {k}."
        )
    return vector


def average_dynamics(
    model: GameModel, pi: MarkovPolicy, psi: MarkovPolicy, grid: Sequence[float]
) -> EvaluationSetup:
    """Reward rate and generator averaged over both policies, per interval."""
    if pi.side is not Side.MAXIMIZER or psi.side is not Side.MINIMIZER:
        raise ValueError("Expected a maximizer and a minimizer policy, in order.")
    grid = check_grid(model, grid)
    cells = interval_cells(model, grid)
    pi_index = _policy_indices(model, pi, grid)
    psi_index = _policy_indices(model, psi, grid)
    n = model.n_states
    reward = np.empty((len(cells), n))
    rates = np.empty((len(cells), n, n))
    for i, k in enumerate(cells):
        for x in range(n):
            lam = _strategy(model, pi, pi_index[i], x, k)
            mu = _strategy(model, psi, psi_index[i], x, k)
            reward[i, x] = lam @ model.r[k][x] @ mu
            rates[i, x] = np.einsum("a,aby,b->y", lam, model.q[k][x], mu)
    return EvaluationSetup(grid=grid, cells=tuple(cells), reward=reward, rates=rates)


def _rk4_backward(
    grid: np.ndarray,
    terminal: np.ndarray,
    rhs: Callable[[int, np.ndarray], np.ndarray],
    on_step: Optional[Callable[[int, np.ndarray], None]] = None,
) -> np.ndarray:
    """Integrate ``v' = -rhs(i, v)`` from ``T`` down to 0, interval by interval."""
    v = np.array(terminal, dtype=float)
    for i in range(len(grid) - 2, -1, -1):
        h = grid[i + 1] - grid[i]
        k1 = rhs(i, v)
        k2 = rhs(i, v + 0.5 * h * k1)
        k3 = rhs(i, v + 0.5 * h * k2)
        k4 = rhs(i, v + h * k3)
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if on_step is not None:
            on_step(i, v)
    return v


def evaluate_payoff(
    model: GameModel, pi: MarkovPolicy, psi: MarkovPolicy, grid: Sequence[float]
) -> np.ndarray:
    """Expected payoff from every initial state under a fixed policy pair.

    Solves the backward Kolmogorov equation with the policy-averaged
    reward and rates by RK4.
    """
    setup = average_dynamics(model, pi, psi, grid)
    return _rk4_backward(
        setup.grid,
        model.terminal,
        lambda i, v: setup.reward[i] + setup.rates[i] @ v,
    )


def expected_payoff(values: Sequence[float], gamma: Sequence[float]) -> float:
    """Payoff under an initial distribution ``gamma`` over states."""
    gamma = np.asarray(gamma, dtype=float)
    values = np.asarray(values, dtype=float)
    if gamma.shape != values.shape:
        raise ValueError("Initial distribution does not match the state count.")
    if np.any(gamma < 0) or abs(gamma.sum() - 1.0) > 1e-10:
        raise ValueError("Initial distribution is not a probability vector.")
    return float(gamma @ values)


def best_response(
    model: GameModel,
    fixed: MarkovPolicy,
    side_to_optimize: Side,
    grid: Sequence[float],
) -> Tuple[np.ndarray, MarkovPolicy]:
    """Best payoff one player can reach against a fixed Markov policy.

    The other player's policy turns the game into a one-controller problem;
    its backward equation takes the max (or min) over pure actions of the
    averaged stage value. The returned deterministic policy picks, on each
    interval, the best action at the interval's left endpoint.
    """
    if fixed.side is side_to_optimize:
        raise ValueError("The fixed policy must belong to the other player.")
    grid = check_grid(model, grid)
    cells = interval_cells(model, grid)
    fixed_index = _policy_indices(model, fixed, grid)
    maximize = side_to_optimize is Side.MAXIMIZER

    # per interval and state: reward vector and rate matrix over own actions
    stage = []
    for i, k in enumerate(cells):
        per_state = []
        for x in range(model.n_states):
            other = _strategy(model, fixed, fixed_index[i], x, k)
            if maximize:
                reward = model.r[k][x] @ other
                rates = np.einsum("aby,b->ay", model.q[k][x], other)
            else:
                reward = other @ model.r[k][x]
                rates = np.einsum("a,aby->by", other, model.q[k][x])
            per_state.append((reward, rates))
        stage.append(per_state)

    pick = np.argmax if maximize else np.argmin

    def rhs(i: int, v: np.ndarray) -> np.ndarray:
        values = [reward + rates @ v for reward, rates in stage[i]]
        return np.array([row[pick(row)] for row in values])

    strategy = [None] * len(cells)

    def record(i: int, v: np.ndarray):
        choice = []
        for reward, rates in stage[i]:
            row = reward + rates @ v
            vector = np.zeros(len(row))
            vector[pick(row)] = 1.0
            choice.append(vector)
        strategy[i] = choice

    values = _rk4_backward(grid, model.terminal, rhs, record)
    return values, MarkovPolicy(side_to_optimize, grid, tuple(cells), strategy)


def certify_saddle(
    model: GameModel,
    u: ValueGrid,
    pi: MarkovPolicy,
    psi: MarkovPolicy,
    grid: Sequence[float],
    tol: float = DEFAULT_SADDLE_TOL,
) -> SaddleCertificate:
    """Bracket the value between the two best responses to the given policies."""
    upper, _ = best_response(model, psi, Side.MAXIMIZER, grid)
    lower, _ = best_response(model, pi, Side.MINIMIZER, grid)
    certificate = SaddleCertificate(
        lower=lower,
        upper=upper,
        value=u.at_start(),
        tolerance=tol,
        states=model.states,
    )
    log = dynamics_log.info if certificate.passed else dynamics_log.warning
    log(f"Saddle gap {float(np.max(certificate.gap)):.3e}, allowed {tol:.3e}.")
    return certificate


def _draw(rng: np.random.Generator, cumulative: np.ndarray) -> int:
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], "right"))
    return min(index, len(cumulative) - 1)


class PathSampler:
    """Thinning sampler of the jump process under a Markov policy pair.

    Events are proposed at the state's uniformization rate; at a proposal
    both players draw actions and the uniformized kernel decides whether
    and where the process jumps. Running reward is integrated exactly from
    the policy-averaged reward rate.
    """

    def __init__(self, model: GameModel, pi: MarkovPolicy, psi: MarkovPolicy):
        if not np.array_equal(pi.grid, psi.grid):
            raise GridMismatchError("Both policies must share one grid.")
        self.model = model
        self.setup = average_dynamics(model, pi, psi, pi.grid)
        self.grid = self.setup.grid
        steps = np.diff(self.grid)
        self.cumulative_reward = np.vstack(
            [
                np.zeros(model.n_states),
                np.cumsum(self.setup.reward * steps[:, None], axis=0),
            ]
        )
        self.kernels = [
            [
                np.cumsum(uniformized_block(model, k, x), axis=2)
                for x in range(model.n_states)
            ]
            for k in range(model.n_cells)
        ]
        self.pi = [[np.cumsum(s) for s in row] for row in pi.strategy]
        self.psi = [[np.cumsum(s) for s in row] for row in psi.strategy]
        self.pi_index = _policy_indices(model, pi, self.grid)
        self.psi_index = _policy_indices(model, psi, self.grid)

    def reward_until(self, x: int, t: float) -> float:
        return float(np.interp(t, self.grid, self.cumulative_reward[:, x]))

    def interval_of(self, t: float) -> int:
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(max(i, 0), len(self.grid) - 2)

    def sample(self, x0: int, rng: np.random.Generator) -> Trajectory:
        model = self.model
        T = model.horizon
        path = Trajectory(states=[x0])
        x, t, held_since = x0, 0.0, 0.0
        while True:
            rate = float(model.m[x])
            if rate <= 0.0:
                break
            t += rng.exponential(1.0 / rate)
            if t >= T:
                break
            i = self.interval_of(t)
            k = self.setup.cells[i]
            a = _draw(rng, self.pi[self.pi_index[i]][x])
            b = _draw(rng, self.psi[self.psi_index[i]][x])
            y = _draw(rng, self.kernels[k][x][a, b])
            if y == x:
                continue
            path.running_reward += self.reward_until(x, t) - self.reward_until(
                x, held_since
            )
            path.jump_times.append(t)
            path.states.append(y)
            x, held_since = y, t
        path.running_reward += self.reward_until(x, T) - self.reward_until(
            x, held_since
        )
        path.terminal_reward = float(model.terminal[x])
        return path


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream of path ``index``; same as ``SeedSequence(seed).spawn``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_path(
    model: GameModel, pi: MarkovPolicy, psi: MarkovPolicy, x0: int, seed: int
) -> Trajectory:
    return PathSampler(model, pi, psi).sample(x0, np.random.default_rng(seed))


def sample_paths(
    model: GameModel,
    pi: MarkovPolicy,
    psi: MarkovPolicy,
    x0: int,
    paths: int,
    seed: int,
    workers: int = 1,
) -> List[Trajectory]:
    """Trajectories ``0 .. paths-1``, each from its own seeded stream.

    Path ``p`` depends only on ``(seed, p)``, so the result does not depend
    on ``workers``.
    """
    sampler = PathSampler(model, pi, psi)

    def run(index: int) -> Trajectory:
        return sampler.sample(x0, path_rng(seed, index))

    if workers <= 1:
        return [run(index) for index in range(paths)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run, range(paths)))


def _mean_and_error(samples: np.ndarray) -> Tuple[float, float]:
    if np.all(samples == samples[0]):
        return float(samples[0]), 0.0
    # numpy sums index-ordered arrays pairwise, so the result is reproducible
    mean = float(np.mean(samples))
    error = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
    return mean, error


def monte_carlo(
    model: GameModel,
    pi: MarkovPolicy,
    psi: MarkovPolicy,
    x0: int,
    paths: int = DEFAULT_PATHS,
    seed: int = 0,
    workers: int = 1,
) -> PayoffEstimate:
    if paths < 2:
        raise ValueError("Monte-Carlo estimation needs at least two paths.")
    trajectories = sample_paths(model, pi, psi, x0, paths, seed, workers)
    estimate = summarize_payoffs(trajectories, seed)
    dynamics_log.info(
        f"Monte-Carlo payoff from '{model.states[x0]}': {estimate.mean:.6f} "
        f"+- {estimate.standard_error:.2e} ({paths} paths, seed {seed})."
    )
    return estimate


def summarize_payoffs(trajectories: Sequence[Trajectory], seed: int) -> PayoffEstimate:
    """Sample mean and standard error of already simulated payoffs."""
    mean, error = _mean_and_error(np.array([p.payoff for p in trajectories]))
    return PayoffEstimate(
        mean=mean, standard_error=error, paths=len(trajectories), seed=seed
    )


def empirical_drift_check(
    model: GameModel,
    cert: DriftCertificate,
    pi: MarkovPolicy,
    psi: MarkovPolicy,
    x0: int,
    t: float,
    paths: int = DEFAULT_PATHS,
    seed: int = 0,
    workers: int = 1,
    trajectories: Optional[Sequence[Trajectory]] = None,
) -> DriftReport:
    """Sample mean of ``w0`` at time ``t`` against ``exp(c0 t) w0(x0)``.

    Also reports the largest jump count seen and the sample payoff against
    the payoff bound of the certificate. Paths already drawn with ``seed``
    can be passed as ``trajectories``; ``paths`` is then their count.
    """
    if not 0.0 <= t <= model.horizon:
        raise ValueError(f"Time {t} lies outside [0, {model.horizon}].")
    if trajectories is None:
        if paths < 2:
            raise ValueError("The drift check needs at least two paths.")
        trajectories = sample_paths(model, pi, psi, x0, paths, seed, workers)
    else:
        if len(trajectories) < 2:
            raise ValueError("The drift check needs at least two paths.")
        if any(p.states[0] != x0 for p in trajectories):
            raise ValueError(f"Paths must start in '{model.states[x0]}'.")
        paths = len(trajectories)
    weights = np.array([cert.w0[p.state_at(t)] for p in trajectories])
    estimate, error = _mean_and_error(weights)
    report = DriftReport(
        time=t,
        estimate=estimate,
        standard_error=error,
        bound=math.exp(cert.c0 * t) * float(cert.w0[x0]),
        max_jumps=max(p.n_jumps for p in trajectories),
        payoff_mean=float(np.mean([p.payoff for p in trajectories])),
        payoff_bound=payoff_bound(model, cert, x0),
        paths=paths,
        seed=seed,
    )
    if not report.passed:
        dynamics_log.warning(f"Drift check failed: {report.dump()}.")
    return report


def dynkin_check(
    model: GameModel,
    u: ValueGrid,
    pi: MarkovPolicy,
    psi: MarkovPolicy,
    x0: int,
    paths: int = DEFAULT_PATHS,
    seed: int = 0,
    workers: int = 1,
) -> DynkinReport:
    """Estimate both sides of the Dynkin identity for ``u`` on common paths.

    Per path, the increment ``u(T, xi_T) - u(0, x0)`` is compared with the
    time integral of ``u' + sum_y u(t, y) qbar(y | t, xi_t)``; ``u`` is
    piecewise linear, so the integral is exact on every holding segment.
    """
    if not np.array_equal(u.grid, pi.grid):
        raise GridMismatchError("The value and the policies must share one grid.")
    setup = average_dynamics(model, pi, psi, u.grid)
    grid = setup.grid
    steps = np.diff(grid)
    slope = np.diff(u.values, axis=0) / steps[:, None]
    # generator applied to u at both ends of each interval, per state
    left = np.einsum("ixy,iy->ix", setup.rates, u.values[:-1])
    right = np.einsum("ixy,iy->ix", setup.rates, u.values[1:])
    pieces = (slope + 0.5 * (left + right)) * steps[:, None]
    cumulative = np.vstack([np.zeros(model.n_states), np.cumsum(pieces, axis=0)])

    def integral_until(x: int, t: float) -> float:
        i = min(int(np.searchsorted(grid, t, side="right")) - 1, len(steps) - 1)
        s = t - grid[i]
        return float(
            cumulative[i, x]
            + (slope[i, x] + left[i, x]) * s
            + (right[i, x] - left[i, x]) * s * s / (2.0 * steps[i])
        )

    trajectories = sample_paths(model, pi, psi, x0, paths, seed, workers)
    increments = np.empty(paths)
    integrals = np.empty(paths)
    T = model.horizon
    for p, path in enumerate(trajectories):
        increments[p] = u.values[-1, path.terminal_state] - u.values[0, x0]
        total, start = 0.0, 0.0
        for time, state in zip(path.jump_times + [T], path.states):
            total += integral_until(state, time) - integral_until(state, start)
            start = time
        integrals[p] = total

    _, error = _mean_and_error(increments - integrals)
    report = DynkinReport(
        terminal_increment=float(np.mean(increments)),
        generator_integral=float(np.mean(integrals)),
        standard_error=error,
        paths=paths,
        seed=seed,
    )
    if not report.passed:
        dynamics_log.warning(f"Dynkin check failed: {report.dump()}.")
    return report
