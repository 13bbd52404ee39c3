from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass
class Trajectory:
    """One sample path of the jump process on ``[0, T]``.

    ``states[0]`` is the initial state and ``states[n]`` the state entered
    at ``jump_times[n - 1]``.
    """

    jump_times: List[float] = field(default_factory=list)
    states: List[int] = field(default_factory=list)
    running_reward: float = 0.0
    terminal_reward: float = 0.0

    @property
    def terminal_state(self) -> int:
        return self.states[-1]

    @property
    def payoff(self) -> float:
        return self.running_reward + self.terminal_reward

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t: float) -> int:
        return self.states[bisect.bisect_right(self.jump_times, t)]

    def __repr__(self) -> str:
        return (
            f"<Trajectory jumps={self.n_jumps} start={self.states[0]} "
            f"end={self.terminal_state} payoff={self.payoff}>"
        )


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    standard_error: float
    paths: int
    seed: int

    def dump(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.standard_error,
            "paths": self.paths,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class DriftReport:
    """Sample moment of the drift function against its exponential bound,
    with the finite-jump and payoff-bound sanity checks."""

    time: float
    estimate: float
    standard_error: float
    bound: float
    max_jumps: int
    payoff_mean: float
    payoff_bound: float
    paths: int
    seed: int

    @property
    def margin(self) -> float:
        return self.bound - self.estimate

    @property
    def passed(self) -> bool:
        return (
            self.estimate <= self.bound + 4.0 * self.standard_error
            and abs(self.payoff_mean) <= self.payoff_bound
        )

    def dump(self) -> dict:
        return {
            "time": self.time,
            "estimate": self.estimate,
            "stderr": self.standard_error,
            "bound": self.bound,
            "margin": self.margin,
            "max_jumps": self.max_jumps,
            "payoff_mean": self.payoff_mean,
            "payoff_bound": self.payoff_bound,
            "paths": self.paths,
            "seed": self.seed,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class DynkinReport:
    """Both sides of the Dynkin identity estimated on the same paths."""

    terminal_increment: float
    generator_integral: float
    standard_error: float
    paths: int
    seed: int

    @property
    def difference(self) -> float:
        return self.terminal_increment - self.generator_integral

    @property
    def passed(self) -> bool:
        slack = 1e-9 * max(1.0, abs(self.terminal_increment))
        return abs(self.difference) <= 4.0 * self.standard_error + slack

    def dump(self) -> dict:
        return {
            "terminal_increment": self.terminal_increment,
            "generator_integral": self.generator_integral,
            "difference": self.difference,
            "stderr": self.standard_error,
            "paths": self.paths,
            "seed": self.seed,
            "passed": self.passed,
        }


@dataclass(frozen=True, eq=False)
class SaddleCertificate:
    """Best-response bracket around the computed value, per initial state."""

    lower: np.ndarray
    upper: np.ndarray
    value: np.ndarray
    tolerance: float
    states: tuple = ()

    @property
    def gap(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def passed(self) -> bool:
        return bool(np.max(self.gap) <= self.tolerance)

    @property
    def bracketed(self) -> bool:
        return bool(
            np.all(self.lower <= self.value + self.tolerance)
            and np.all(self.value <= self.upper + self.tolerance)
        )

    def dump(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "max_gap": float(np.max(self.gap)),
            "passed": self.passed,
            "bracketed": self.bracketed,
            "states": {
                label: {
                    "lower": float(self.lower[x]),
                    "value": float(self.value[x]),
                    "upper": float(self.upper[x]),
                    "gap": float(self.gap[x]),
                }
                for x, label in enumerate(self.states)
            },
        }


@dataclass(frozen=True, eq=False)
class EvaluationSetup:
    """Policy-averaged reward and rates on each interval of an evaluation grid."""

    grid: np.ndarray
    cells: tuple
    reward: np.ndarray
    rates: np.ndarray
