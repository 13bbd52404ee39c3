import json
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from jumpgame.exceptions import DimensionError, ModelFormatError, UnknownReferenceError

from .module import default_uniform_rates, model_log
from .objects import DriftCertificate, GameModel, TimePartition


def dump_json(data: Any) -> str:
    """Structured text with stable key order, newline-terminated."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _real(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"Expected a number, got {value!r}.", path=path)
    return float(value)


def _labels(value, path: str) -> List[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ModelFormatError("Expected a list of string labels.", path=path)
    if len(set(value)) != len(value):
        raise ModelFormatError("Duplicate labels.", path=path)
    return value


def _array(value, shape: Sequence[int], path: str) -> np.ndarray:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError("Expected a rectangular array of numbers.", path=path)
    if array.size == 0 and 0 in shape:
        # empty action lists are reported by validate_model
        return np.zeros(shape)
    if array.shape != tuple(shape):
        raise DimensionError(
            f"Expected shape {tuple(shape)}, got {array.shape}.", path=path
        )
    return array


def _state_map(
    value, states: Sequence[str], path: str, required: bool
) -> Dict[str, float]:
    if not isinstance(value, dict):
        raise ModelFormatError("Expected a map from state label to number.", path=path)
    for label in value:
        if label not in states:
            raise UnknownReferenceError(f"Unknown state '{label}'.", path=path)
    if required:
        missing = [s for s in states if s not in value]
        if missing:
            raise ModelFormatError(f"Missing states {missing}.", path=path)
    return {label: _real(v, f"{path}.{label}") for label, v in value.items()}


def _parse_certificate(
    data: Dict[str, Any], states: Sequence[str]
) -> Optional[DriftCertificate]:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ModelFormatError("Expected an object.", path="certificate")
    try:
        w0 = _state_map(data["w0"], states, "certificate.w0", required=True)
        w1 = _state_map(data["w1"], states, "certificate.w1", required=True)
        constants = {
            name: _real(data[name], f"certificate.{name}")
            for name in ("c0", "c1", "M0", "M1")
        }
    except KeyError as exc:
        raise ModelFormatError(f"Missing field {exc}.", path="certificate")
    return DriftCertificate(
        w0=[w0[s] for s in states], w1=[w1[s] for s in states], **constants
    )


def parse_model(text: str) -> GameModel:
    """Build a game model from model-file content.

    Parsing is structural: rates that break conservativeness or sign
    conditions are accepted here and reported by ``validate_model``.

    Raises:
        ModelFormatError: Syntax errors, missing fields, non-numeric values.
        DimensionError: Arrays of the wrong shape.
        UnknownReferenceError: Labels that name no state.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(exc.msg, line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ModelFormatError("Top level must be an object.")

    for key in ("horizon", "states", "dynamics", "terminal"):
        if key not in data:
            raise ModelFormatError(f"Missing field '{key}'.")

    horizon = _real(data["horizon"], "horizon")
    if horizon <= 0:
        raise ModelFormatError("Horizon must be positive.", path="horizon")

    boundaries = [
        _real(v, f"cells[{i}]") for i, v in enumerate(data.get("cells", [0, horizon]))
    ]
    if (
        len(boundaries) < 2
        or boundaries[0] != 0
        or boundaries[-1] != horizon
        or any(b >= c for b, c in zip(boundaries, boundaries[1:]))
    ):
        raise ModelFormatError(
            "Cell boundaries must increase strictly from 0 to the horizon.",
            path="cells",
        )
    partition = TimePartition(tuple(boundaries))

    states = _labels(data["states"], "states")
    if not states:
        raise ModelFormatError("At least one state is required.", path="states")
    n = len(states)

    dynamics = data["dynamics"]
    if not isinstance(dynamics, list):
        raise ModelFormatError("Expected a list of cells.", path="dynamics")
    if len(dynamics) != partition.n_cells:
        raise DimensionError(
            f"Expected {partition.n_cells} cells, got {len(dynamics)}.",
            path="dynamics",
        )

    actions_max, actions_min, q, r = [], [], [], []
    for k, cell in enumerate(dynamics):
        if not isinstance(cell, dict):
            raise ModelFormatError(
                "Expected a map keyed by state.", path=f"dynamics[{k}]"
            )
        for label in cell:
            if label not in states:
                raise UnknownReferenceError(
                    f"Unknown state '{label}'.", path=f"dynamics[{k}]"
                )
        cell_max, cell_min, cell_q, cell_r = [], [], [], []
        for label in states:
            path = f"dynamics[{k}].{label}"
            entry = cell.get(label)
            if not isinstance(entry, dict):
                raise ModelFormatError("Missing state entry.", path=path)
            try:
                a_labels = _labels(entry["actions_max"], f"{path}.actions_max")
                b_labels = _labels(entry["actions_min"], f"{path}.actions_min")
                q_block = _array(
                    entry["q"], (len(a_labels), len(b_labels), n), f"{path}.q"
                )
                r_block = _array(
                    entry["r"], (len(a_labels), len(b_labels)), f"{path}.r"
                )
            except KeyError as exc:
                raise ModelFormatError(f"Missing field {exc}.", path=path)
            cell_max.append(tuple(a_labels))
            cell_min.append(tuple(b_labels))
            cell_q.append(q_block)
            cell_r.append(r_block)
        actions_max.append(tuple(cell_max))
        actions_min.append(tuple(cell_min))
        q.append(tuple(cell_q))
        r.append(tuple(cell_r))

    terminal = _state_map(data["terminal"], states, "terminal", required=True)

    model = GameModel(
        states=tuple(states),
        partition=partition,
        actions_max=tuple(actions_max),
        actions_min=tuple(actions_min),
        q=tuple(q),
        r=tuple(r),
        terminal=[terminal[s] for s in states],
        m=np.zeros(n),
    )

    m = default_uniform_rates(model)
    if data.get("m") is not None:
        given = _state_map(data["m"], states, "m", required=False)
        for label, value in given.items():
            m[states.index(label)] = value

    certificate = _parse_certificate(data.get("certificate"), states)
    model = GameModel(
        states=model.states,
        partition=partition,
        actions_max=model.actions_max,
        actions_min=model.actions_min,
        q=model.q,
        r=model.r,
        terminal=model.terminal,
        m=m,
        certificate=certificate,
    )
    model_log.info(
        f"Parsed model with {n} states and {partition.n_cells} cells, "
        f"horizon {horizon}."
    )
    return model


def serialize_model(model: GameModel) -> str:
    """Model-file content that ``parse_model`` reads back unchanged."""
    data = {
        "horizon": model.horizon,
        "cells": list(model.partition.boundaries),
        "states": list(model.states),
        "dynamics": [
            {
                label: {
                    "actions_max": list(model.actions_max[k][x]),
                    "actions_min": list(model.actions_min[k][x]),
                    "q": model.q[k][x].tolist(),
                    "r": model.r[k][x].tolist(),
                }
                for x, label in enumerate(model.states)
            }
            for k in range(model.n_cells)
        ],
        "terminal": {s: float(g) for s, g in zip(model.states, model.terminal)},
        "m": {s: float(m) for s, m in zip(model.states, model.m)},
    }
    if model.certificate is not None:
        data["certificate"] = model.certificate.dump(model.states)
    return dump_json(data)


def load_model(path) -> GameModel:
    with open(path, encoding="utf-8") as handle:
        return parse_model(handle.read())
