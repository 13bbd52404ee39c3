from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from jumpgame.model.objects import DriftCertificate, GameModel


class StageForm(enum.Enum):
    UNIFORMIZED = "uniformized"
    GENERATOR = "generator"


class Side(enum.Enum):
    MAXIMIZER = "maximizer"
    MINIMIZER = "minimizer"


class Method(enum.Enum):
    ITERATE = "iterate"
    ODE = "ode"
    BOTH = "both"


@dataclass(frozen=True, eq=False)
class ValueGrid:
    """Value function sampled on a time grid, piecewise linear in time.

    ``values[i, x]`` is the value at ``grid[i]`` in state ``x``.
    """

    grid: np.ndarray
    values: np.ndarray
    certificate: Optional[DriftCertificate] = None

    @property
    def n_intervals(self) -> int:
        return len(self.grid) - 1

    def interpolate(self, t: float) -> np.ndarray:
        """Value slice at time ``t`` over all states."""
        if t <= self.grid[0]:
            return self.values[0].copy()
        if t >= self.grid[-1]:
            return self.values[-1].copy()
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        weight = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i])
        return (1.0 - weight) * self.values[i] + weight * self.values[i + 1]

    def at_start(self) -> np.ndarray:
        return self.values[0].copy()

    def __repr__(self) -> str:
        return (
            f"<ValueGrid points={len(self.grid)} states={self.values.shape[1]} "
            f"u0={self.values[0].tolist()}>"
        )


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Piecewise-constant Markov policy of one player.

    ``strategy[i][x]`` is a probability vector over the admissible actions of
    cell ``cells[i]`` in state ``x`` and applies on ``[grid[i], grid[i+1])``.
    """

    side: Side
    grid: np.ndarray
    cells: Sequence[int]
    strategy: Sequence[Sequence[np.ndarray]]

    @property
    def n_intervals(self) -> int:
        return len(self.grid) - 1

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(max(i, 0), self.n_intervals - 1)

    def at(self, t: float, x: int) -> np.ndarray:
        return self.strategy[self.index_of(t)][x]

    def labels(self, model: GameModel, i: int, x: int) -> Sequence[str]:
        if self.side is Side.MAXIMIZER:
            return model.actions_max[self.cells[i]][x]
        return model.actions_min[self.cells[i]][x]

    def __repr__(self) -> str:
        return (
            f"<MarkovPolicy side={self.side.value} intervals={self.n_intervals} "
            f"states={len(self.strategy[0]) if self.strategy else 0}>"
        )

    def dump(self, model: GameModel) -> dict:
        entries = []
        for i in range(self.n_intervals):
            for x, label in enumerate(model.states):
                entries.append(
                    {
                        "index": i,
                        "time": float(self.grid[i]),
                        "state": label,
                        "probabilities": {
                            action: float(p)
                            for action, p in zip(
                                self.labels(model, i, x), self.strategy[i][x]
                            )
                        },
                    }
                )
        return {
            "side": self.side.value,
            "grid": [float(t) for t in self.grid],
            "entries": entries,
        }


@dataclass
class SolveDiagnostics:
    """Per-iteration record of value iteration."""

    iterations: int = 0
    deltas: List[float] = field(default_factory=list)
    monotonicity_violations: List[float] = field(default_factory=list)
    envelope_violations: List[float] = field(default_factory=list)
    fixed_point_residual: Optional[float] = None
    converged: bool = False

    @property
    def contraction_ratios(self) -> List[float]:
        return [
            later / earlier if earlier > 0 else 0.0
            for earlier, later in zip(self.deltas, self.deltas[1:])
        ]

    def dump(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "deltas": self.deltas,
            "monotonicity_violations": self.monotonicity_violations,
            "envelope_violations": self.envelope_violations,
            "contraction_ratios": self.contraction_ratios,
            "fixed_point_residual": self.fixed_point_residual,
        }


@dataclass
class SolveResult:
    """Outcome of ``solve``: the selected solution plus cross-check data."""

    values: ValueGrid
    iterate: Optional[ValueGrid] = None
    ode: Optional[ValueGrid] = None
    diagnostics: Optional[SolveDiagnostics] = None
    gap: Optional[float] = None
    gap_bound: Optional[float] = None
    quadrature_slack: Optional[float] = None

    @property
    def agreed(self) -> bool:
        return self.gap is None or self.gap <= self.gap_bound

    def dump(self) -> dict:
        return {
            "diagnostics": self.diagnostics.dump() if self.diagnostics else None,
            "cross_check_gap": self.gap,
            "cross_check_bound": self.gap_bound,
            "quadrature_slack": self.quadrature_slack,
        }
