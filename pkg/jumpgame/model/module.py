import logging
import math

import numpy as np

from .objects import DriftCertificate, GameModel, ValidationReport

model_log = logging.getLogger("jumpgame.model")

# Row-sum tolerance for generator rows and uniformized kernels
STOCHASTIC_TOL = 1e-12

# Uniformization rate used for states that never leave
MIN_UNIFORM_RATE = 1e-9


def default_uniform_rates(model: GameModel) -> np.ndarray:
    """Smallest rates dominating the exit rates, floored at ``MIN_UNIFORM_RATE``."""
    return np.maximum(model.exit_rates(), MIN_UNIFORM_RATE)


def _indices(model: GameModel):
    """Iterate ``(k, x, a, b, row)`` over every admissible action pair."""
    for k in range(model.n_cells):
        for x in range(model.n_states):
            block = model.q[k][x]
            for a in range(block.shape[0]):
                for b in range(block.shape[1]):
                    yield k, x, a, b, block[a, b]


def _label(model: GameModel, k: int, x: int, a: int, b: int) -> tuple:
    return (
        k,
        model.states[x],
        model.actions_max[k][x][a],
        model.actions_min[k][x][b],
    )


def validate_model(model: GameModel, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    """Check the structural rate conditions of a model.

    Failures are report entries; nothing is raised.
    """
    report = ValidationReport()

    empty = []
    for k in range(model.n_cells):
        for x in range(model.n_states):
            if not model.actions_max[k][x]:
                empty.append((1.0, (k, model.states[x], "max")))
            if not model.actions_min[k][x]:
                empty.append((1.0, (k, model.states[x], "min")))
    report.add("nonempty_actions", empty)

    conservative = []
    negative = []
    for k, x, a, b, row in _indices(model):
        index = _label(model, k, x, a, b)
        conservative.append((abs(float(np.sum(row))), index))
        for y in range(model.n_states):
            if y != x and row[y] < 0:
                negative.append((float(-row[y]), index + (model.states[y],)))
    report.add("conservativeness", conservative, tol=tol)
    report.add("offdiagonal_nonnegative", negative)

    exit_rates = model.exit_rates()
    dominated = [
        (float(exit_rates[x] - model.m[x]), (model.states[x],))
        for x in range(model.n_states)
    ]
    report.add("uniform_rate_dominates", dominated, tol=tol)
    report.add(
        "uniform_rate_positive",
        [(1.0, (model.states[x],)) for x in range(model.n_states) if model.m[x] <= 0],
    )

    for check in report.failures:
        model_log.warning(
            f"Model check '{check.check_id}' failed, worst violation {check.violation}."
        )
    return report


def auto_certificate(model: GameModel) -> DriftCertificate:
    """Constant drift functions with constants taken from the data maxima."""
    max_reward = max(
        (
            float(np.max(np.abs(block)))
            for cell in model.r
            for block in cell
            if block.size
        ),
        default=0.0,
    )
    max_terminal = float(np.max(np.abs(model.terminal)))
    max_rate = float(np.max(model.exit_rates()))
    ones = np.ones(model.n_states)
    return DriftCertificate(
        w0=ones,
        w1=ones,
        c0=1.0,
        c1=1.0,
        M0=max(1.0, max_reward, max_terminal, max_rate),
        M1=max(1.0, max_rate),
    )


def validate_certificate(
    model: GameModel, cert: DriftCertificate, tol: float = STOCHASTIC_TOL
) -> ValidationReport:
    """Check every drift clause over all cells, states and action pairs."""
    report = ValidationReport()
    report.add(
        "certificate_positive_constants",
        [
            (1.0, (name,))
            for name, value in (
                ("c0", cert.c0),
                ("c1", cert.c1),
                ("M0", cert.M0),
                ("M1", cert.M1),
            )
            if not value > 0
        ],
    )
    report.add(
        "certificate_weights_at_least_one",
        [
            (float(1.0 - w[x]), (name, model.states[x]))
            for name, w in (("w0", cert.w0), ("w1", cert.w1))
            for x in range(model.n_states)
        ],
    )

    drift0, drift1, reward = [], [], []
    for k, x, a, b, row in _indices(model):
        index = _label(model, k, x, a, b)
        drift0.append((float(row @ cert.w0 - cert.c0 * cert.w0[x]), index))
        drift1.append((float(row @ cert.w1 - cert.c1 * cert.w1[x]), index))
        reward.append(
            (abs(float(model.r[k][x][a, b])) - cert.M0 * cert.w0[x], index)
        )
    for x in range(model.n_states):
        reward.append(
            (abs(float(model.terminal[x])) - cert.M0 * cert.w0[x], (model.states[x],))
        )

    exit_rates = model.exit_rates()
    rate0 = [
        (float(exit_rates[x] - cert.M0 * cert.w0[x]), (model.states[x],))
        for x in range(model.n_states)
    ]
    rate1 = [
        (float(cert.w0[x] * exit_rates[x] - cert.M1 * cert.w1[x]), (model.states[x],))
        for x in range(model.n_states)
    ]

    report.add("drift_w0", drift0, tol=tol)
    report.add("exit_rate_bound", rate0, tol=tol)
    report.add("reward_bound", reward, tol=tol)
    report.add("drift_w1", drift1, tol=tol)
    report.add("weighted_exit_rate_bound", rate1, tol=tol)

    for check in report.failures:
        model_log.warning(
            f"Certificate clause '{check.check_id}' failed, "
            f"worst violation {check.violation}."
        )
    return report


def uniformized_kernel(model: GameModel, k: int, x: int, a: int, b: int) -> np.ndarray:
    """Transition probabilities of the uniformized chain from ``x``."""
    rate = float(model.m[x])
    if rate <= 0:
        raise ZeroDivisionError(
            f"Uniformization rate of state '{model.states[x]}' is not positive."
        )
    kernel = model.q[k][x][a, b] / rate
    kernel[x] += 1.0
    return kernel


def uniformized_block(model: GameModel, k: int, x: int) -> np.ndarray:
    """All uniformized kernels of ``(k, x)`` as an array ``[a, b, y]``."""
    block = model.q[k][x] / float(model.m[x])
    block[:, :, x] += 1.0
    return block


def payoff_bound(model: GameModel, cert: DriftCertificate, x: int) -> float:
    """Bound on the absolute payoff from ``x`` under any policy pair."""
    T = model.horizon
    return (T + 1.0) * cert.M0 * math.exp(cert.c0 * T) * float(cert.w0[x])
