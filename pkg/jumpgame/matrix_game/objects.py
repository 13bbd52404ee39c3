from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class MatrixGameSolution:
    """Value and optimal mixed strategies of a finite zero-sum game.

    Rows belong to the maximizer (``lam``), columns to the minimizer (``mu``).
    Optimal strategies are not unique in general; compare solutions through
    ``residual`` and ``value``, never through strategy equality.

    ``residual`` is the absolute saddle violation. The solver accepts it up
    to ``tol * max(1, max|M|)``, so the tolerance is relative to the payoff
    scale for matrices with entries above one in absolute value.
    """

    value: float
    lam: np.ndarray
    mu: np.ndarray
    residual: float

    def __repr__(self) -> str:
        return (
            f"<MatrixGameSolution value={self.value} lam={self.lam.tolist()} "
            f"mu={self.mu.tolist()} residual={self.residual}>"
        )

    def dump(self) -> dict:
        return {
            "value": float(self.value),
            "lambda": [float(p) for p in self.lam],
            "mu": [float(p) for p in self.mu],
            "residual": float(self.residual),
        }
