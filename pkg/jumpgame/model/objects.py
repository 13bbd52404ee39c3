from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimePartition:
    """Cells ``[tau_k, tau_{k+1})`` covering ``[0, T]``.

    Args:
        boundaries: Strictly increasing, starting at 0 and ending at the horizon.
    """

    boundaries: Tuple[float, ...]

    @staticmethod
    def single(horizon: float) -> TimePartition:
        return TimePartition((0.0, float(horizon)))

    @property
    def horizon(self) -> float:
        return self.boundaries[-1]

    @property
    def n_cells(self) -> int:
        return len(self.boundaries) - 1

    def cell_of(self, t: float) -> int:
        """Index of the left-closed cell containing ``t``.

        ``t = T`` maps to the last cell.
        """
        if t < 0 or t > self.horizon:
            raise ValueError(f"Time {t} lies outside [0, {self.horizon}].")
        k = bisect.bisect_right(self.boundaries, t) - 1
        return min(k, self.n_cells - 1)

    def __repr__(self) -> str:
        return f"<TimePartition boundaries={list(self.boundaries)}>"

    def dump(self) -> dict:
        return {"horizon": self.horizon, "cells": list(self.boundaries)}


@dataclass(frozen=True, eq=False)
class DriftCertificate:
    """Drift functions and constants bounding rates and rewards."""

    w0: np.ndarray
    w1: np.ndarray
    c0: float
    c1: float
    M0: float
    M1: float

    def __post_init__(self):
        object.__setattr__(self, "w0", _frozen(self.w0))
        object.__setattr__(self, "w1", _frozen(self.w1))

    def __repr__(self) -> str:
        return (
            f"<DriftCertificate c0={self.c0} c1={self.c1} "
            f"M0={self.M0} M1={self.M1} w0={self.w0.tolist()} w1={self.w1.tolist()}>"
        )

    def dump(self, states: Sequence[str]) -> dict:
        return {
            "w0": {s: float(w) for s, w in zip(states, self.w0)},
            "w1": {s: float(w) for s, w in zip(states, self.w1)},
            "c0": self.c0,
            "c1": self.c1,
            "M0": self.M0,
            "M1": self.M1,
        }


@dataclass(frozen=True, eq=False)
class GameModel:
    """Finite game with piecewise-constant data on a time partition.

    Cell-indexed fields are nested as ``[k][x]``: ``q[k][x]`` is an array of shape
    ``(len(actions_max[k][x]), len(actions_min[k][x]), n_states)`` and ``r[k][x]``
    has the first two of those dimensions.
    """

    states: Tuple[str, ...]
    partition: TimePartition
    actions_max: Tuple[Tuple[Tuple[str, ...], ...], ...]
    actions_min: Tuple[Tuple[Tuple[str, ...], ...], ...]
    q: Tuple[Tuple[np.ndarray, ...], ...]
    r: Tuple[Tuple[np.ndarray, ...], ...]
    terminal: np.ndarray
    m: np.ndarray
    certificate: Optional[DriftCertificate] = None
    _state_index: Dict[str, int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "q",
            tuple(tuple(_frozen(block) for block in cell) for cell in self.q),
        )
        object.__setattr__(
            self,
            "r",
            tuple(tuple(_frozen(block) for block in cell) for cell in self.r),
        )
        object.__setattr__(self, "terminal", _frozen(self.terminal))
        object.__setattr__(self, "m", _frozen(self.m))
        object.__setattr__(
            self, "_state_index", {s: i for i, s in enumerate(self.states)}
        )

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_cells(self) -> int:
        return self.partition.n_cells

    @property
    def horizon(self) -> float:
        return self.partition.horizon

    def cell_of(self, t: float) -> int:
        return self.partition.cell_of(t)

    def state_index(self, label: str) -> int:
        try:
            return self._state_index[label]
        except KeyError:
            raise KeyError(f"Unknown state '{label}'.") from None

    def exit_rates(self) -> np.ndarray:
        """Largest total exit rate per state over cells and action pairs."""
        rates = np.zeros(self.n_states)
        for cell in self.q:
            for x, block in enumerate(cell):
                if block.size:
                    rates[x] = max(rates[x], float(np.max(-block[:, :, x])))
        return rates

    def with_certificate(self, certificate: Optional[DriftCertificate]) -> GameModel:
        return GameModel(
            states=self.states,
            partition=self.partition,
            actions_max=self.actions_max,
            actions_min=self.actions_min,
            q=self.q,
            r=self.r,
            terminal=self.terminal,
            m=self.m,
            certificate=certificate,
        )

    def __repr__(self) -> str:
        return (
            f"<GameModel states={len(self.states)} cells={self.n_cells} "
            f"horizon={self.horizon}>"
        )


@dataclass(frozen=True)
class Check:
    """A single entry of a validation report."""

    check_id: str
    passed: bool
    violation: float = 0.0
    offending: Tuple[Tuple, ...] = ()

    def dump(self) -> dict:
        return {
            "check": self.check_id,
            "passed": self.passed,
            "violation": self.violation,
            "offending": [list(index) for index in self.offending],
        }


@dataclass
class ValidationReport:
    checks: List[Check] = field(default_factory=list)

    def add(
        self, check_id: str, violations: List[Tuple[float, Tuple]], tol: float = 0.0
    ) -> Check:
        """Record a check from a list of ``(magnitude, index)`` violations.

        Magnitudes at or below ``tol`` count as passing.
        """
        failing = [(v, index) for v, index in violations if v > tol]
        worst = max((v for v, _ in failing), default=0.0)
        check = Check(
            check_id=check_id,
            passed=not failing,
            violation=float(worst),
            offending=tuple(index for _, index in failing),
        )
        self.checks.append(check)
        return check

    def extend(self, other: ValidationReport) -> ValidationReport:
        self.checks.extend(other.checks)
        return self

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def get(self, check_id: str) -> Optional[Check]:
        for check in self.checks:
            if check.check_id == check_id:
                return check
        return None

    def __repr__(self) -> str:
        return (
            f"<ValidationReport checks={len(self.checks)} "
            f"failures={[c.check_id for c in self.failures]}>"
        )

    def dump(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.dump() for c in self.checks],
        }
