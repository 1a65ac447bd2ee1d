import os
import pytest
import numpy as np

import nhmpc.mpc as mpc
import nhmpc.cli.nhmpc_cli as nhmpc_cli
from common.exceptions import ConfigError
from common.errors import EXIT_OK, EXIT_NUMERICAL_FAILURE, EXIT_USAGE_ERROR
from nhmpc.cli.nhmpc_cli import load_config, cmd_analyze, cmd_chart, main
from nhmpc.trace_io import read_trace

SCENARIOS_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "..", "scenarios")

TINY_UNICYCLE = """
[vehicle]
name = unicycle

[initial_state]
x0 = 0.0, 0.2, 0.0

[cost]
kind = {kind}

[horizon]
dt = 0.25
steps = 4
duration = 0.5

[solver]
max_iter = 100
restarts = 1
"""


def write_scenario(folder, name, kind="tailored", text=None):
    path = os.path.join(str(folder), name)
    with open(path, "w") as f:
        f.write(text if text is not None else TINY_UNICYCLE.format(kind=kind))

    return path


def test_load_config(tmp_path):
    conf_path = os.path.join(SCENARIOS_DIR, "unicycle.conf")
    config_loader, config, name = load_config(conf_path, {"SOLVER_SEED": 4}, str(tmp_path))

    assert name == "unicycle"
    assert config["VEHICLE_NAME"] == "unicycle"
    assert config["SOLVER_SEED"] == 4
    assert config["OUT_DIR"] == str(tmp_path)
    assert config["OUTPUT_TRACE"] == os.path.join(str(tmp_path), "trace.csv")
    assert "SOLVER_SEED" in config_loader.overwritten_fields


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(None, {}, str(tmp_path))

    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.conf"), {}, str(tmp_path))


@pytest.mark.parametrize("name", sorted(f for f in os.listdir(SCENARIOS_DIR) if f.endswith(".conf")))
def test_bundled_scenarios_load(tmp_path, name):
    _, config, _ = load_config(os.path.join(SCENARIOS_DIR, name), {}, str(tmp_path))
    scenario = mpc.Scenario.from_config(config)
    assert scenario.x0.shape == scenario.d.shape


@pytest.mark.timeout(600)
def test_two_trailer_quadratic_fixtures(tmp_path):
    overrides = {"HORIZON_DURATION": 2.5, "HORIZON_STEPS": 10}
    scenarios = {}
    for name in ("two_trailer_insufficient.conf", "two_trailer_quadratic.conf"):
        _, config, _ = load_config(os.path.join(SCENARIOS_DIR, name), overrides, str(tmp_path))
        scenarios[name] = mpc.Scenario.from_config(config, name)

    insufficient, displaced = scenarios["two_trailer_insufficient.conf"], scenarios["two_trailer_quadratic.conf"]
    model = insufficient.build_model()
    assert mpc.insufficiency_residual(model, np.eye(5), insufficient.x0) < 1e-12
    assert mpc.insufficiency_residual(model, np.eye(5), displaced.x0) > 1e-3

    trace = mpc.run_closed_loop(insufficient)
    assert mpc.stationarity_check(trace, 1e-6)
    assert mpc.value_function_report(trace).stagnating


def test_cmd_analyze(tmp_path):
    _, config, name = load_config(os.path.join(SCENARIOS_DIR, "unicycle.conf"), {}, str(tmp_path))
    lines = cmd_analyze(config, name)

    assert "growth: (2, 3)" in lines
    assert "weights: (1, 1, 2)" in lines
    assert "degree: 2" in lines
    assert "basis: X1, X2, [X1,X2]" in lines
    assert "tailored exponents: states (4, 4, 2), inputs (4, 4)" in lines
    assert "\tz3 = y3" in lines


def test_cmd_chart(tmp_path):
    _, config, name = load_config(os.path.join(SCENARIOS_DIR, "unicycle.conf"), {}, str(tmp_path))
    lines = cmd_chart(config, name)

    assert lines[:3] == ["y1 = 1.0*x1", "y2 = 1.0*x3", "y3 = -1.0*x2"]
    assert lines[6].split() == ["field", "component", "monomial", "coefficient"]

    end = lines.index("triangular: True")
    rows = [line.split() for line in lines[7:end]]
    assert ["1", "1", "1"] == rows[0][:3]
    third = [row for row in rows if row[:3] == ["1", "3", "z2"]]
    assert len(third) == 1
    assert float(third[0][3]) == pytest.approx(-1.0, abs=1e-6)

    assert lines[end + 1].split() == ["field", "component", "weight", "slope"]
    slopes = [line.split() for line in lines[end + 2 :]]
    assert len(slopes) == 6
    for _, _, weight, slope in slopes:
        assert float(slope) >= float(weight) - 0.1


def test_main_help(capsys):
    assert main("help", [], [], {}) == EXIT_OK
    assert "COMMANDS:" in capsys.readouterr().out

    assert main("help", ["run"], [], {}) == EXIT_OK
    assert "nhmpc run" in capsys.readouterr().out

    assert main("help", ["fly"], [], {}) == EXIT_USAGE_ERROR


def test_main_wrong_number_of_scenarios(tmp_path):
    path = write_scenario(tmp_path, "a.conf")
    assert main("run", [], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR
    assert main("analyze", [path], [path], {}, str(tmp_path)) == EXIT_USAGE_ERROR
    assert main("compare", [path], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR


def test_main_config_errors(tmp_path, capsys):
    unknown = write_scenario(tmp_path, "unknown.conf", text="[vehicle]\nwheels = 3\n")
    assert main("analyze", [unknown], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR
    assert "Unknown key" in capsys.readouterr().err

    wrong_type = write_scenario(tmp_path, "wrong.conf", text="[horizon]\nsteps = many\n")
    assert main("analyze", [wrong_type], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR

    inconsistent = write_scenario(tmp_path, "dims.conf", text="[vehicle]\nname = unicycle\n")
    assert main("analyze", [inconsistent], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR

    assert main("run", [str(tmp_path / "nope.conf")], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR


def test_main_dump_config(tmp_path, capsys):
    path = write_scenario(tmp_path, "tiny.conf")
    assert main("run", [path], [], {"SOLVER_SEED": 9}, str(tmp_path), dump_config=True) == EXIT_OK

    dumped = write_scenario(tmp_path, "dumped.conf", text=capsys.readouterr().out)
    _, original, _ = load_config(path, {"SOLVER_SEED": 9}, str(tmp_path))
    _, reparsed, _ = load_config(dumped, {}, str(tmp_path))
    assert reparsed == original

    # Nothing was run
    assert not os.path.exists(original["OUTPUT_TRACE"])


@pytest.mark.timeout(600)
def test_main_run(tmp_path, capsys):
    path = write_scenario(tmp_path, "tiny.conf")
    out_dir = str(tmp_path / "out")
    assert main("run", [path], [], {}, out_dir, svg=True) == EXIT_OK

    assert "scenario: tiny" in capsys.readouterr().out
    for name in ("trace.csv", "summary.txt", "trajectory.svg"):
        assert os.path.isfile(os.path.join(out_dir, name))

    trace = read_trace(os.path.join(out_dir, "trace.csv"))
    assert len(trace["t"]) == 3
    assert trace["states"].shape == (3, 3)


@pytest.mark.timeout(600)
def test_main_run_divergence(tmp_path, monkeypatch):
    monkeypatch.setattr(mpc, "_plant_step", lambda model, x, u, dt, substeps: x * float("nan"))
    path = write_scenario(tmp_path, "tiny.conf")

    assert main("run", [path], [], {}, str(tmp_path)) == EXIT_NUMERICAL_FAILURE
    # The partial trace is kept
    assert len(read_trace(str(tmp_path / "trace.csv"))["t"]) == 1


def test_main_compare_different_vehicles(tmp_path, capsys):
    first = write_scenario(tmp_path, "a.conf")
    second = write_scenario(tmp_path, "b.conf", text="[vehicle]\nname = kinematic_car\n")
    assert main("compare", [first, second], [], {}, str(tmp_path)) == EXIT_USAGE_ERROR
    assert "must share vehicle" in capsys.readouterr().err


@pytest.mark.timeout(600)
def test_main_compare(tmp_path, capsys):
    tailored = write_scenario(tmp_path, "tailored.conf")
    quadratic = write_scenario(tmp_path, "quadratic.conf", kind="quadratic")
    out_dir = str(tmp_path / "out")

    assert main("compare", [tailored, quadratic], [], {}, out_dir, svg=True) == EXIT_OK

    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["tailored", "quadratic", "difference"]
    assert lines[-1].split() == ["stationary", "false", "true"]

    for stem in ("tailored", "quadratic"):
        assert os.path.isfile(os.path.join(out_dir, stem, "trace.csv"))

    assert os.path.isfile(os.path.join(out_dir, "compare.svg"))


def test_run_command_line(monkeypatch, capsys):
    def exit_code(args):
        monkeypatch.setattr(nhmpc_cli, "argv", ["nhmpc"] + args)
        with pytest.raises(SystemExit) as e:
            nhmpc_cli.run()

        return e.value.code

    assert exit_code(["help"]) == EXIT_OK
    assert exit_code(["-h"]) == EXIT_OK
    assert exit_code([]) == EXIT_USAGE_ERROR
    assert exit_code(["fly"]) == EXIT_USAGE_ERROR
    assert exit_code(["--seed", "x", "run"]) == EXIT_USAGE_ERROR
    assert exit_code(["--bogus", "run"]) == EXIT_USAGE_ERROR
    capsys.readouterr()
