import json
from typing import Dict, List

import numpy as np
import pandas as pd

from jumpgame.exceptions import GridMismatchError, PolicyFormatError
from jumpgame.model.files import dump_json
from jumpgame.model.objects import GameModel

from .module import check_grid, interval_cells
from .objects import MarkovPolicy, Side, ValueGrid

FLOAT_FORMAT = "%.17g"

# Probability vectors read from policy files must sum to one within this
PROBABILITY_TOL = 1e-10


def values_frame(model: GameModel, u: ValueGrid) -> pd.DataFrame:
    """Long table ``t, state, value`` ordered by time, then state."""
    n = model.n_states
    return pd.DataFrame(
        {
            "t": np.repeat(u.grid, n),
            "state": np.tile(np.array(model.states, dtype=object), len(u.grid)),
            "value": u.values.reshape(-1),
        },
        columns=["t", "state", "value"],
    )


def write_values(model: GameModel, u: ValueGrid, path) -> None:
    values_frame(model, u).to_csv(
        path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )


def write_policy(model: GameModel, policy: MarkovPolicy, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dump_json(policy.dump(model)))


def write_diagnostics(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dump_json(data))


def parse_policy(text: str, model: GameModel, side: Side) -> MarkovPolicy:
    """Read a policy file back against the model it was written for.

    Raises:
        PolicyFormatError: Malformed content, unknown actions or states,
            missing entries, or strategies that are not probability vectors.
        GridMismatchError: The grid does not fit the model's horizon or cells.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyFormatError(f"line {exc.lineno}: {exc.msg}") from exc
    try:
        declared = Side(data["side"])
        grid = check_grid(model, data["grid"])
        entries: List[Dict] = data["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFormatError(f"Malformed policy file: {exc}") from exc
    if declared is not side:
        raise PolicyFormatError(
            f"Expected a {side.value} policy, got a {declared.value} policy."
        )

    cells = interval_cells(model, grid)
    N = len(grid) - 1
    strategy = [[None] * model.n_states for _ in range(N)]
    for entry in entries:
        try:
            i = int(entry["index"])
            x = model.state_index(entry["state"])
            probabilities = dict(entry["probabilities"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PolicyFormatError(f"Malformed policy entry {entry!r}.") from exc
        if not 0 <= i < N:
            raise GridMismatchError(f"Entry index {i} is outside the grid.")
        admissible = (
            model.actions_max[cells[i]][x]
            if side is Side.MAXIMIZER
            else model.actions_min[cells[i]][x]
        )
        unknown = set(probabilities) - set(admissible)
        if unknown:
            raise PolicyFormatError(
                f"Actions {sorted(unknown)} are not admissible at index {i}, "
                f"state '{model.states[x]}'."
            )
        vector = np.array([float(probabilities.get(a, 0.0)) for a in admissible])
        if np.any(vector < 0) or abs(vector.sum() - 1.0) > PROBABILITY_TOL:
            raise PolicyFormatError(
                f"Strategy at index {i}, state '{model.states[x]}' "
                f"is not a probability vector."
            )
        strategy[i][x] = vector

    missing = [
        (i, model.states[x])
        for i in range(N)
        for x in range(model.n_states)
        if strategy[i][x] is None
    ]
    if missing:
        raise GridMismatchError(f"Policy has no strategy for {missing[:5]}.")
    return MarkovPolicy(side, grid, tuple(cells), strategy)


def load_policy(path, model: GameModel, side: Side) -> MarkovPolicy:
    with open(path, encoding="utf-8") as handle:
        return parse_policy(handle.read(), model, side)
