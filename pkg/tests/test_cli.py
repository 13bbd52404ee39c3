import json
import logging

import numpy as np
import pandas as pd
import pytest
from conftest import (
    build,
    entry,
    model_data,
    pure_death_data,
    random_model_data,
    single_state_data,
)

from jumpgame.cli.module import (
    EXIT_FAILURE,
    EXIT_INPUT_ERROR,
    EXIT_OK,
    build_parser,
    main,
)
from jumpgame.cli.objects import RunConfig
from jumpgame.solver.module import build_grid
from jumpgame.solver.objects import MarkovPolicy, Method, Side

STAGE = [[3.0, 1.0], [0.0, 2.0]]


def write_model(directory, data, name="model.json") -> str:
    path = directory / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def certified_death_data():
    data = pure_death_data()
    data["certificate"] = {
        "w0": {"0": 1.0, "1": 2.0},
        "w1": {"0": 1.0, "1": 1.0},
        "c0": 1.0,
        "c1": 1.0,
        "M0": 2.0,
        "M1": 4.0,
    }
    return data


def run(capsys, *argv):
    status = main(list(argv))
    return status, capsys.readouterr()


@pytest.fixture(autouse=True)
def quiet_logging():
    yield
    # handlers hold the stderr stream captured for a single test
    logging.getLogger("jumpgame").handlers.clear()


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def stage_file(workdir):
    return write_model(workdir, single_state_data(STAGE))


def test_validate_passes(capsys, stage_file):
    status, out = run(capsys, "validate", "--model", stage_file)
    assert status == EXIT_OK
    output = json.loads(out.out)
    assert output["certificate"] == "auto"
    assert output["report"]["passed"] is True


def test_validate_given_certificate(capsys, workdir):
    path = write_model(workdir, certified_death_data())
    status, out = run(capsys, "validate", "--model", path, "--out-report", "r.json")
    assert status == EXIT_OK
    assert json.loads(out.out)["certificate"] == "given"
    assert json.loads((workdir / "r.json").read_text()) == json.loads(out.out)


def test_validate_nonconservative(capsys, workdir):
    data = model_data(
        ["x0", "x1"],
        [
            {
                "x0": entry([[[-2.0, 1.0]]], [[0.0]]),
                "x1": entry([[[0.0, 0.0]]], [[0.0]]),
            }
        ],
        [0.0, 0.0],
    )
    status, out = run(capsys, "validate", "--model", write_model(workdir, data))
    assert status == EXIT_FAILURE
    checks = json.loads(out.out)["report"]["checks"]
    assert any(c["check"] == "conservativeness" and not c["passed"] for c in checks)


def test_validate_malformed(capsys, workdir):
    path = workdir / "broken.json"
    path.write_text('{"horizon": 1,', encoding="utf-8")
    status, out = run(capsys, "validate", "--model", str(path))
    assert status == EXIT_INPUT_ERROR
    assert "line 1" in out.err


def test_validate_missing_file(capsys):
    status, _ = run(capsys, "validate", "--model", "nowhere.json")
    assert status == EXIT_INPUT_ERROR


def test_solve_writes_outputs(capsys, workdir, stage_file):
    status, out = run(capsys, "solve", "--model", stage_file, "--grid", "50")
    assert status == EXIT_OK
    summary = json.loads(out.out)
    assert summary["value"]["s"] == pytest.approx(1.5, abs=1e-6)
    assert summary["agreed"] is True
    assert summary["grid"] == 50
    assert "diagnostics" not in summary

    values = pd.read_csv(workdir / "values.csv")
    assert list(values.columns) == ["t", "state", "value"]
    assert len(values) == 51
    policy = json.loads((workdir / "policy_min.json").read_text())
    assert policy["side"] == "minimizer"
    assert policy["entries"][0]["probabilities"] == pytest.approx(
        {"b0": 0.25, "b1": 0.75}
    )
    diagnostics = json.loads((workdir / "diagnostics.json").read_text())
    assert diagnostics["diagnostics"]["converged"] is True


def test_solve_without_convergence(capsys, workdir, stage_file):
    status, out = run(
        capsys, "solve", "--model", stage_file, "--grid", "20", "--max-iter", "1"
    )
    assert status == EXIT_FAILURE
    assert json.loads(out.out)["converged"] is False
    assert (workdir / "values.csv").exists()
    diagnostics = json.loads((workdir / "diagnostics.json").read_text())
    assert diagnostics["diagnostics"]["iterations"] == 1
    assert not (workdir / "policy_max.json").exists()


SOLVE_OUTPUTS = ("values.csv", "policy_max.json", "policy_min.json", "diag.json")


def test_solve_is_reproducible(capsys, workdir):
    path = write_model(workdir, random_model_data(12, 3, 2, 3, 2))
    outputs = {}
    for run_name, workers in (("first", "1"), ("again", "1"), ("threaded", "3")):
        (workdir / run_name).mkdir()
        status, out = run(
            capsys,
            "solve",
            "--model",
            path,
            "--grid",
            "40",
            "--workers",
            workers,
            "--out-values",
            f"{run_name}/values.csv",
            "--out-policy-max",
            f"{run_name}/policy_max.json",
            "--out-policy-min",
            f"{run_name}/policy_min.json",
            "--out-diagnostics",
            f"{run_name}/diag.json",
        )
        outputs[run_name] = [status, out.out] + [
            (workdir / run_name / name).read_bytes() for name in SOLVE_OUTPUTS
        ]
    assert outputs["first"] == outputs["again"] == outputs["threaded"]


def test_solve_invalid_model(capsys, workdir):
    data = single_state_data([[1.0]])
    data["dynamics"][0]["s"]["q"] = [[[0.5]]]
    status, out = run(capsys, "solve", "--model", write_model(workdir, data))
    assert status == EXIT_FAILURE
    assert json.loads(out.out)["report"]["passed"] is False
    assert not (workdir / "values.csv").exists()


def test_certify_computed_policies(capsys, stage_file):
    status, out = run(capsys, "certify", "--model", stage_file, "--grid", "50")
    assert status == EXIT_OK
    certificate = json.loads(out.out)
    assert certificate["passed"] is True
    assert certificate["max_gap"] <= 1e-9


def test_certify_detects_bad_policy(capsys, workdir, stage_file):
    model = build(single_state_data(STAGE))
    grid = build_grid(model.partition, 50)
    bad = MarkovPolicy(
        Side.MINIMIZER,
        grid,
        tuple([0] * 50),
        [[np.array([0.0, 1.0])] for _ in range(50)],
    )
    (workdir / "bad.json").write_text(json.dumps(bad.dump(model)), encoding="utf-8")
    status, out = run(
        capsys,
        "certify",
        "--model",
        stage_file,
        "--grid",
        "50",
        "--policy-min",
        "bad.json",
    )
    assert status == EXIT_FAILURE
    assert json.loads(out.out)["max_gap"] == pytest.approx(0.5, abs=1e-6)


def test_certify_wrong_side_policy(capsys, workdir, stage_file):
    model = build(single_state_data(STAGE))
    grid = build_grid(model.partition, 10)
    column = MarkovPolicy(
        Side.MINIMIZER,
        grid,
        tuple([0] * 10),
        [[np.array([0.5, 0.5])] for _ in range(10)],
    )
    (workdir / "min.json").write_text(json.dumps(column.dump(model)))
    status, _ = run(
        capsys, "certify", "--model", stage_file, "--policy-max", "min.json"
    )
    assert status == EXIT_INPUT_ERROR


def simulate(capsys, path, *extra):
    return run(
        capsys,
        "simulate",
        "--model",
        path,
        "--grid",
        "20",
        "--x0",
        "1",
        "--paths",
        "500",
        "--seed",
        "8",
        *extra,
    )


def test_simulate_is_reproducible(capsys, workdir):
    path = write_model(workdir, certified_death_data())
    first = simulate(capsys, path)
    again = simulate(capsys, path)
    threaded = simulate(capsys, path, "--workers", "4")
    assert first[0] == EXIT_OK
    assert first[1].out == again[1].out == threaded[1].out
    output = json.loads(first[1].out)
    assert output["x0"] == "1"
    assert output["estimate"]["paths"] == 500
    assert output["drift"]["passed"] is True


def test_simulate_without_certificate(capsys, workdir):
    path = write_model(workdir, pure_death_data())
    status, out = simulate(capsys, path, "--out-trajectories", "paths.csv")
    assert status == EXIT_OK
    assert "drift" not in json.loads(out.out)
    frame = pd.read_csv(workdir / "paths.csv")
    assert frame["path_id"].nunique() == 500


def test_simulate_unknown_state(capsys, workdir):
    path = write_model(workdir, pure_death_data())
    status, out = run(capsys, "simulate", "--model", path, "--x0", "ghost")
    assert status == EXIT_INPUT_ERROR
    assert "ghost" in out.err


def test_simulate_needs_two_paths(capsys, workdir):
    path = write_model(workdir, pure_death_data())
    status, _ = run(
        capsys, "simulate", "--model", path, "--grid", "10", "--paths", "1"
    )
    assert status == EXIT_INPUT_ERROR


def test_matrix(capsys, workdir):
    (workdir / "m.csv").write_text("3,1\n0,2\n", encoding="utf-8")
    status, out = run(capsys, "matrix", "--in", "m.csv")
    assert status == EXIT_OK
    solution = json.loads(out.out)
    assert solution["value"] == pytest.approx(1.5)
    assert solution["lambda"] == pytest.approx([0.5, 0.5])


def test_matrix_not_numeric(capsys, workdir):
    (workdir / "m.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    status, _ = run(capsys, "matrix", "--in", "m.csv")
    assert status == EXIT_INPUT_ERROR


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    assert "--grid" in text
    assert "default: 1000" in text


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["explode"],
        ["solve"],
        ["solve", "--model", "m.json", "--grid", "ten"],
        ["solve", "--model", "m.json", "--grid", "1"],
        ["solve", "--model", "m.json", "--method", "guess"],
        ["simulate", "--model", "m.json", "--seed", "-1"],
    ],
)
def test_bad_arguments(capsys, argv):
    status, out = run(capsys, *argv)
    assert status == EXIT_INPUT_ERROR
    assert out.err


def test_run_config_from_namespace():
    namespace = build_parser().parse_args(
        ["certify", "--model", "m.json", "--method", "ode", "--saddle-tol", "0.1"]
    )
    config = RunConfig.from_namespace(namespace)
    assert config.command == "certify"
    assert config.method is Method.ODE
    assert config.saddle_tol == 0.1
    assert config.grid == 1000
