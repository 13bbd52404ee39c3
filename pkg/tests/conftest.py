import json
from typing import Dict, List, Optional, Sequence

import numpy as np
import pytest

from jumpgame.model.files import parse_model
from jumpgame.model.module import auto_certificate
from jumpgame.model.objects import GameModel
from jumpgame.solver.module import build_grid, extract_policies, solve
from jumpgame.solver.objects import MarkovPolicy, Method, Side


def entry(q, r, actions_max=None, actions_min=None) -> Dict:
    """Model-file entry of one state in one cell."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    A, B = r.shape
    return {
        "actions_max": actions_max or [f"a{i}" for i in range(A)],
        "actions_min": actions_min or [f"b{j}" for j in range(B)],
        "q": np.asarray(q, dtype=float).reshape(A, B, -1).tolist(),
        "r": r.tolist(),
    }


def model_data(
    states: Sequence[str],
    dynamics: List[Dict],
    terminal: Sequence[float],
    horizon: float = 1.0,
    cells: Optional[Sequence[float]] = None,
    **extra,
) -> Dict:
    data = {
        "horizon": horizon,
        "states": list(states),
        "dynamics": dynamics,
        "terminal": dict(zip(states, terminal)),
    }
    if cells is not None:
        data["cells"] = list(cells)
    data.update(extra)
    return data


def build(data: Dict) -> GameModel:
    return parse_model(json.dumps(data))


def single_state_data(r, g: float = 0.0, horizon: float = 1.0) -> Dict:
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return model_data(
        ["s"],
        [{"s": entry(np.zeros(r.shape + (1,)), r)}],
        [g],
        horizon=horizon,
    )


def pure_death_data(horizon: float = 1.0) -> Dict:
    """State '1' dies into '0' at rate 1 and earns reward 1 while alive."""
    return model_data(
        ["0", "1"],
        [
            {
                "0": entry([[[0.0, 0.0]]], [[0.0]]),
                "1": entry([[[1.0, -1.0]]], [[1.0]]),
            }
        ],
        [0.0, 0.0],
        horizon=horizon,
    )


def random_model_data(
    seed: int,
    n: int,
    A: int,
    B: int,
    K: int = 1,
    horizon: float = 1.0,
    max_rate: float = 2.0,
    max_reward: float = 3.0,
) -> Dict:
    """Bounded random game with rates at most ``max_rate`` per state."""
    rng = np.random.default_rng(seed)
    states = [f"x{i}" for i in range(n)]
    dynamics = []
    for _ in range(K):
        cell = {}
        for x, label in enumerate(states):
            off = rng.uniform(0.0, max_rate / max(n - 1, 1), (A, B, n))
            off[:, :, x] = 0.0
            q = off.copy()
            q[:, :, x] = -off.sum(axis=2)
            r = rng.uniform(-max_reward, max_reward, (A, B))
            cell[label] = entry(q, r)
        dynamics.append(cell)
    terminal = rng.uniform(-1.0, 1.0, n).tolist()
    cells = np.linspace(0.0, horizon, K + 1).tolist()
    return model_data(states, dynamics, terminal, horizon=horizon, cells=cells)


def uniform_policy(model: GameModel, grid, side: Side) -> MarkovPolicy:
    """Every admissible action equally likely everywhere."""
    grid = np.asarray(grid, dtype=float)
    cells = tuple(model.cell_of(t) for t in grid[:-1])
    actions = model.actions_max if side is Side.MAXIMIZER else model.actions_min
    strategy = [
        [
            np.full(len(actions[k][x]), 1.0 / len(actions[k][x]))
            for x in range(model.n_states)
        ]
        for k in cells
    ]
    return MarkovPolicy(side, grid, cells, strategy)


# (seed, states, maximizer actions, minimizer actions, cells)
CORPUS = {
    "pair": (11, 2, 2, 2, 1),
    "three_two_cells": (12, 3, 2, 3, 2),
    "four_states": (13, 4, 3, 3, 1),
    "five_two_cells": (14, 5, 2, 2, 2),
}

# acceptance-scale corpus, solved on 2000 intervals
LARGE_CORPUS = {
    "large_pair": (21, 2, 4, 4, 2),
    "large_four": (22, 4, 3, 4, 2),
    "large_six": (23, 6, 4, 3, 2),
    "large_eight": (24, 8, 2, 4, 1),
    "large_ten": (25, 10, 4, 4, 2),
    "large_ten_single": (26, 10, 3, 3, 1),
}

CORPUS_GRID = 200


class Solved:
    """A corpus model with its solution and extracted saddle policies."""

    def __init__(self, model: GameModel, n_intervals: int):
        self.model = model
        self.cert = auto_certificate(model)
        self.grid = build_grid(model.partition, n_intervals)
        self.result = solve(model, self.cert, self.grid, Method.BOTH)
        self.u = self.result.values
        self.pi, self.psi = extract_policies(model, self.u)


@pytest.fixture
def rho_model() -> GameModel:
    return build(single_state_data([[0.7]], g=0.3, horizon=2.0))


@pytest.fixture
def stage_model() -> GameModel:
    return build(single_state_data([[3.0, 1.0], [0.0, 2.0]]))


@pytest.fixture
def pennies_model() -> GameModel:
    return build(single_state_data([[1.0, -1.0], [-1.0, 1.0]], horizon=2.0))


@pytest.fixture
def pure_death_model() -> GameModel:
    return build(pure_death_data())


@pytest.fixture(scope="session", params=sorted(CORPUS))
def solved(request) -> Solved:
    seed, n, A, B, K = CORPUS[request.param]
    return Solved(build(random_model_data(seed, n, A, B, K)), CORPUS_GRID)


@pytest.fixture(scope="session", params=sorted(LARGE_CORPUS))
def solved_large(request) -> Solved:
    seed, n, A, B, K = LARGE_CORPUS[request.param]
    return Solved(build(random_model_data(seed, n, A, B, K)), 2000)
