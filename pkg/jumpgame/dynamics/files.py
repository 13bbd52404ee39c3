from typing import Sequence

import pandas as pd

from jumpgame.model.files import dump_json
from jumpgame.model.objects import GameModel
from jumpgame.solver.files import FLOAT_FORMAT

from .objects import Trajectory


def trajectories_frame(model: GameModel, paths: Sequence[Trajectory]) -> pd.DataFrame:
    """One row per visited state; ``jump_index`` 0 is the initial state at time 0."""
    rows = []
    for path_id, path in enumerate(paths):
        times = [0.0] + list(path.jump_times)
        for jump_index, (time, state) in enumerate(zip(times, path.states)):
            rows.append((path_id, jump_index, time, model.states[state]))
    return pd.DataFrame(rows, columns=["path_id", "jump_index", "time", "state"])


def write_trajectories(model: GameModel, paths: Sequence[Trajectory], path) -> None:
    trajectories_frame(model, paths).to_csv(
        path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )


def write_report(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dump_json(data))
