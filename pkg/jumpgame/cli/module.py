import argparse
import logging
import sys
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd

from jumpgame import __version__
from jumpgame.dynamics.files import write_report, write_trajectories
from jumpgame.dynamics.module import (
    DEFAULT_PATHS,
    DEFAULT_SADDLE_TOL,
    certify_saddle,
    empirical_drift_check,
    sample_paths,
    summarize_payoffs,
)
from jumpgame.exceptions import (
    ConvergenceError,
    GridMismatchError,
    ModelFormatError,
    NonFiniteError,
    PolicyFormatError,
    SaddleResidualError,
    UnknownReferenceError,
    UsageError,
)
from jumpgame.matrix_game.module import DEFAULT_TOL as MATRIX_TOL
from jumpgame.matrix_game.module import solve_matrix_game
from jumpgame.model.files import dump_json, load_model
from jumpgame.model.module import (
    auto_certificate,
    validate_certificate,
    validate_model,
)
from jumpgame.model.objects import DriftCertificate, GameModel, ValidationReport
from jumpgame.solver.files import (
    load_policy,
    write_diagnostics,
    write_policy,
    write_values,
)
from jumpgame.solver.module import (
    DEFAULT_GRID,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    build_grid,
    extract_policies,
    solve,
)
from jumpgame.solver.objects import MarkovPolicy, Method, Side, SolveResult

from .objects import RunConfig

cli_log = logging.getLogger("jumpgame.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT_ERROR = 2

# Raised on unreadable or inconsistent input, reported with EXIT_INPUT_ERROR
INPUT_ERRORS = (
    ModelFormatError,
    PolicyFormatError,
    GridMismatchError,
    NonFiniteError,
    OSError,
    ValueError,
)


class CommandParser(argparse.ArgumentParser):
    """Patch ArgumentParser.

    ArgumentParser calls sys.exit(2) on incorrect command, which would
    also end an embedding program or a test session. This subclass saves
    the message in 'error_message' and raises UsageError instead, so that
    the caller decides about the exit status.
    """

    error_message: Optional[str] = None

    def error(self, message: str):
        """Save the error message and stop parsing."""
        self.error_message = message
        raise UsageError(f"{self.prog}: {message}")


def _emit(data: dict, path: Optional[str] = None):
    """Structured result goes to stdout, and to ``path`` when given."""
    sys.stdout.write(dump_json(data))
    if path:
        write_report(data, path)


def _prepare(config: RunConfig) -> Tuple[GameModel, DriftCertificate, ValidationReport]:
    model = load_model(config.model)
    cert = model.certificate or auto_certificate(model)
    report = validate_model(model).extend(validate_certificate(model, cert))
    return model, cert, report


def _solve(model: GameModel, cert: DriftCertificate, config: RunConfig) -> SolveResult:
    result = solve(
        model,
        cert,
        build_grid(model.partition, config.grid),
        config.method,
        config.tol,
        config.max_iter,
        config.matrix_tol,
        config.workers,
    )
    if not result.agreed:
        cli_log.warning("Value iteration and Isaacs integration disagree.")
    return result


def _policies(
    model: GameModel, cert: DriftCertificate, config: RunConfig
) -> Tuple[Optional[SolveResult], MarkovPolicy, MarkovPolicy]:
    """Policies from the given files; missing ones are recomputed."""
    result, pi, psi = None, None, None
    if config.policy_max:
        pi = load_policy(config.policy_max, model, Side.MAXIMIZER)
    if config.policy_min:
        psi = load_policy(config.policy_min, model, Side.MINIMIZER)
    if pi is None or psi is None:
        result = _solve(model, cert, config)
        computed = extract_policies(
            model, result.values, config.matrix_tol, config.workers
        )
        pi = computed[0] if pi is None else pi
        psi = computed[1] if psi is None else psi
    return result, pi, psi


def _initial_state(model: GameModel, config: RunConfig) -> int:
    if config.x0 is None:
        return 0
    try:
        return model.state_index(config.x0)
    except KeyError:
        raise UnknownReferenceError(
            f"Unknown initial state '{config.x0}'.", "x0"
        ) from None


def _invalid(report: ValidationReport, config: RunConfig) -> int:
    cli_log.warning(f"Model {config.model} does not validate.")
    _emit({"model": config.model, "report": report.dump()}, config.out_report)
    return EXIT_FAILURE


def cmd_validate(config: RunConfig) -> int:
    model, cert, report = _prepare(config)
    _emit(
        {
            "model": config.model,
            "certificate": "given" if model.certificate else "auto",
            "drift": cert.dump(model.states),
            "report": report.dump(),
        },
        config.out_report,
    )
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_solve(config: RunConfig) -> int:
    model, cert, report = _prepare(config)
    if not report.passed:
        return _invalid(report, config)

    try:
        result = _solve(model, cert, config)
    except ConvergenceError as exc:
        if config.out_values and exc.values is not None:
            write_values(model, exc.values, config.out_values)
        diagnostics = {"converged": False, "error": str(exc)}
        if exc.diagnostics is not None:
            diagnostics["diagnostics"] = exc.diagnostics.dump()
        if config.out_diagnostics:
            write_diagnostics(diagnostics, config.out_diagnostics)
        _emit(diagnostics)
        return EXIT_FAILURE

    pi, psi = extract_policies(model, result.values, config.matrix_tol, config.workers)
    if config.out_values:
        write_values(model, result.values, config.out_values)
    if config.out_policy_max:
        write_policy(model, pi, config.out_policy_max)
    if config.out_policy_min:
        write_policy(model, psi, config.out_policy_min)

    summary = {
        "method": config.method.value,
        "grid": len(result.values.grid) - 1,
        "value": dict(zip(model.states, result.values.at_start().tolist())),
        "agreed": result.agreed,
        **result.dump(),
    }
    if config.out_diagnostics:
        write_diagnostics(summary, config.out_diagnostics)
    summary.pop("diagnostics")
    _emit(summary)
    return EXIT_OK if result.agreed else EXIT_FAILURE


def cmd_certify(config: RunConfig) -> int:
    model, cert, report = _prepare(config)
    if not report.passed:
        return _invalid(report, config)

    result, pi, psi = _policies(model, cert, config)
    u = result.values if result is not None else _solve(model, cert, config).values
    grid = pi.grid if np.array_equal(pi.grid, psi.grid) else u.grid
    certificate = certify_saddle(model, u, pi, psi, grid, config.saddle_tol)
    _emit(certificate.dump(), config.out_report)
    return EXIT_OK if certificate.passed else EXIT_FAILURE


def cmd_simulate(config: RunConfig) -> int:
    model, cert, report = _prepare(config)
    if not report.passed:
        return _invalid(report, config)

    x0 = _initial_state(model, config)
    _, pi, psi = _policies(model, cert, config)
    if config.paths < 2:
        raise ValueError("Simulation needs at least two paths.")
    trajectories = sample_paths(
        model, pi, psi, x0, config.paths, config.seed, config.workers
    )
    if config.out_trajectories:
        write_trajectories(model, trajectories, config.out_trajectories)

    output = {
        "x0": model.states[x0],
        "estimate": summarize_payoffs(trajectories, config.seed).dump(),
    }
    status = EXIT_OK
    if model.certificate is not None:
        drift = empirical_drift_check(
            model,
            model.certificate,
            pi,
            psi,
            x0,
            model.horizon if config.time is None else config.time,
            config.paths,
            config.seed,
            config.workers,
            trajectories=trajectories,
        )
        output["drift"] = drift.dump()
        status = EXIT_OK if drift.passed else EXIT_FAILURE
    _emit(output, config.out_report)
    return status


def cmd_matrix(config: RunConfig) -> int:
    frame = pd.read_csv(config.matrix, header=None)
    try:
        M = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise ValueError(f"{config.matrix} is not a numeric matrix: {exc}") from exc
    _emit(solve_matrix_game(M, config.matrix_tol).dump(), config.out_report)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "matrix": cmd_matrix,
}


def build_parser() -> CommandParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter

    common = CommandParser(add_help=False)
    common.add_argument(
        "--verbose", action="store_true", help="log debug messages to stderr"
    )
    common.add_argument(
        "--workers", type=int, default=1, help="threads for state and path loops"
    )

    model = CommandParser(add_help=False)
    model.add_argument("--model", required=True, help="model file (JSON)")

    solver = CommandParser(add_help=False)
    solver.add_argument(
        "--grid", type=int, default=DEFAULT_GRID, help="number of time intervals N"
    )
    solver.add_argument(
        "--tol", type=float, default=DEFAULT_TOL, help="value iteration tolerance"
    )
    solver.add_argument(
        "--matrix-tol",
        type=float,
        default=MATRIX_TOL,
        help="saddle residual tolerance of stage games",
    )
    solver.add_argument(
        "--max-iter",
        type=int,
        default=DEFAULT_MAX_ITER,
        help="value iteration limit",
    )
    solver.add_argument(
        "--method",
        choices=[method.value for method in Method],
        default=Method.BOTH.value,
        help="solver; 'both' cross-checks the two",
    )

    policies = CommandParser(add_help=False)
    policies.add_argument(
        "--policy-max", help="maximizer policy file; recomputed when omitted"
    )
    policies.add_argument(
        "--policy-min", help="minimizer policy file; recomputed when omitted"
    )

    report = CommandParser(add_help=False)
    report.add_argument("--out-report", help="also write the JSON result here")

    parser = CommandParser(
        prog="jumpgame",
        description="Solve finite-horizon zero-sum Markov jump games.",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser(
        "validate",
        parents=[common, model, report],
        formatter_class=formatter,
        help="check a model and its drift certificate",
    )

    solve_parser = commands.add_parser(
        "solve",
        parents=[common, model, solver],
        formatter_class=formatter,
        help="compute the value and saddle policies",
    )
    solve_parser.add_argument(
        "--out-values", default="values.csv", help="value table (CSV)"
    )
    solve_parser.add_argument(
        "--out-policy-max", default="policy_max.json", help="maximizer policy"
    )
    solve_parser.add_argument(
        "--out-policy-min", default="policy_min.json", help="minimizer policy"
    )
    solve_parser.add_argument(
        "--out-diagnostics", default="diagnostics.json", help="solver diagnostics"
    )

    certify_parser = commands.add_parser(
        "certify",
        parents=[common, model, solver, policies, report],
        formatter_class=formatter,
        help="bound the duality gap of a policy pair by best responses",
    )
    certify_parser.add_argument(
        "--saddle-tol",
        type=float,
        default=DEFAULT_SADDLE_TOL,
        help="largest accepted duality gap",
    )

    simulate_parser = commands.add_parser(
        "simulate",
        parents=[common, model, solver, policies, report],
        formatter_class=formatter,
        help="estimate the payoff of a policy pair by simulation",
    )
    simulate_parser.add_argument(
        "--x0", help="initial state; the first state if omitted"
    )
    simulate_parser.add_argument(
        "--paths", type=int, default=DEFAULT_PATHS, help="number of sample paths"
    )
    simulate_parser.add_argument("--seed", type=int, default=0, help="random seed")
    simulate_parser.add_argument(
        "--time", type=float, help="drift check time; the horizon if omitted"
    )
    simulate_parser.add_argument("--out-trajectories", help="trajectory dump (CSV)")

    matrix_parser = commands.add_parser(
        "matrix",
        parents=[common, report],
        formatter_class=formatter,
        help="solve a single matrix game",
    )
    matrix_parser.add_argument(
        "--in",
        dest="matrix",
        required=True,
        help="header-less numeric CSV, rows maximize",
    )
    matrix_parser.add_argument(
        "--matrix-tol",
        type=float,
        default=MATRIX_TOL,
        help="saddle residual tolerance",
    )
    return parser


def configure_logging(verbose: bool):
    package = logging.getLogger("jumpgame")
    package.setLevel(logging.DEBUG if verbose else logging.WARNING)
    if not package.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        package.addHandler(handler)


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
        config = RunConfig.from_namespace(namespace)
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INPUT_ERROR

    configure_logging(config.verbose)
    try:
        return COMMANDS[config.command](config)
    except INPUT_ERRORS as exc:
        cli_log.error(str(exc))
        sys.stderr.write(f"jumpgame {config.command}: {exc}\n")
        return EXIT_INPUT_ERROR
    except (ConvergenceError, SaddleResidualError) as exc:
        cli_log.error(str(exc))
        sys.stderr.write(f"jumpgame {config.command}: {exc}\n")
        return EXIT_FAILURE
