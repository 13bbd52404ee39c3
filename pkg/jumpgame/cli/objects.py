from dataclasses import dataclass
from typing import Optional

from jumpgame.solver.objects import Method


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, gathered from its flags."""

    command: str
    model: Optional[str] = None
    grid: int = 1000
    tol: float = 1e-8
    matrix_tol: float = 1e-9
    saddle_tol: float = 1e-3
    max_iter: int = 10000
    method: Method = Method.BOTH
    paths: int = 10000
    seed: int = 0
    workers: int = 1
    x0: Optional[str] = None
    time: Optional[float] = None
    policy_max: Optional[str] = None
    policy_min: Optional[str] = None
    out_values: Optional[str] = None
    out_policy_max: Optional[str] = None
    out_policy_min: Optional[str] = None
    out_diagnostics: Optional[str] = None
    out_trajectories: Optional[str] = None
    out_report: Optional[str] = None
    matrix: Optional[str] = None
    verbose: bool = False

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError(f"Grid size must be at least 2, got {self.grid}.")
        for name in ("tol", "matrix_tol", "saddle_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Tolerance {name} must be positive.")
        if self.paths < 1:
            raise ValueError(f"Path count must be at least 1, got {self.paths}.")
        if self.max_iter < 1 or self.workers < 1:
            raise ValueError("Iteration limit and worker count must be positive.")
        if self.seed < 0:
            raise ValueError("Seed must be non-negative.")

    @classmethod
    def from_namespace(cls, namespace) -> "RunConfig":
        values = {
            key: value
            for key, value in vars(namespace).items()
            if key in cls.__dataclass_fields__
        }
        if "method" in values:
            values["method"] = Method(values["method"])
        return cls(**values)
