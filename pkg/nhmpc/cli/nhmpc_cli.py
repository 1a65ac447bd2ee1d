import os
import sys
from sys import argv
from getopt import getopt, GetoptError
from multiprocessing import get_context

import nhmpc.logger
from common.config_loader import ConfigLoader
from common.tools import setup_data_folder, format_float, format_vector
from common.exceptions import BasicException, InvalidParameter, ConfigError
from common.errors import EXIT_OK, EXIT_NUMERICAL_FAILURE, EXIT_USAGE_ERROR

from nhmpc import DEFAULT_SCENARIO, OUT_DIR
from nhmpc.logger import setup_logging, get_logger
from nhmpc.cli.help import show_usage, help_analyze, help_chart, help_run, help_compare
from nhmpc.cost import tailored_exponents
from nhmpc.mpc import Scenario, build_pipeline, run_closed_loop
from nhmpc.ocp import RolloutDivergence
from nhmpc.privcoord import (
    extract_homogeneous_approx,
    verify_homogeneity,
    check_triangular,
    approximation_slopes,
    format_monomial,
)
from nhmpc.trace_io import write_trace, write_summary, summary, comparison
from nhmpc.plots import plot_runs

logger = get_logger(component="Cli")

COMMANDS = ["analyze", "chart", "run", "compare", "help"]
HELP = {"analyze": help_analyze, "chart": help_chart, "run": help_run, "compare": help_compare}


def load_config(conf_path, command_line_conf, out_dir):
    """
    Loads a scenario file on top of the defaults, with the command line taking precedence.

    Returns:
        :obj:`tuple`: ``(config_loader, config, name)`` where ``name`` is the file name without extension.

    Raises:
        :obj:`ConfigError`: If the file is missing or malformed.
    """

    if not conf_path:
        raise ConfigError("No scenario file given. Use --config")

    if not os.path.isfile(conf_path):
        raise ConfigError("Scenario file not found", path=conf_path)

    name = os.path.splitext(os.path.basename(conf_path))[0]
    config_loader = ConfigLoader(conf_path, DEFAULT_SCENARIO, dict(command_line_conf), out_dir)

    return config_loader, config_loader.build_config(), name


def cmd_analyze(config, name=""):
    """
    Analyzes the vehicle of a scenario at its setpoint.

    Returns:
        :obj:`list`: The report lines (filtration, frame, chart, approximation, homogeneity residual, exponents).
    """

    scenario = Scenario.from_config(config, name)
    pipeline = build_pipeline(scenario)
    filtration, chart = pipeline.filtration, pipeline.chart
    approx = extract_homogeneous_approx(chart, pipeline.model, seed=scenario.seed)
    state_exponents, input_exponents, _ = tailored_exponents(chart.weights, approx.s, scenario.cancel_gcd)

    lines = [
        "model: {!r}".format(pipeline.model),
        "setpoint: {}".format(format_vector(scenario.d)),
        "growth: {}".format(filtration.growth),
        "weights: {}".format(filtration.weights),
        "degree: {}".format(filtration.degree),
        "basis: {}".format(", ".join(str(word) for word in filtration.basis_words)),
        "frame:",
    ]
    lines += ["\t" + format_vector(row) for row in filtration.frame]
    lines += ["chart:"] + ["\t" + line for line in chart.describe()]
    lines += ["approximation:"] + ["\t" + line for line in approx.describe()]
    lines += [
        "homogeneity residual: {}".format(format_float(verify_homogeneity(approx))),
        "tailored exponents: states {}, inputs {}".format(state_exponents, input_exponents),
    ]

    return lines


def cmd_chart(config, name=""):
    """
    Describes the privileged chart of a scenario.

    Returns:
        :obj:`list`: The step-1 map, the step-2 terms, the approximation coefficient table, whether the approximation
            is triangular and the convergence slope of every field component.
    """

    scenario = Scenario.from_config(config, name)
    pipeline = build_pipeline(scenario)
    approx = extract_homogeneous_approx(pipeline.chart, pipeline.model, seed=scenario.seed)

    lines = pipeline.chart.describe()
    lines.append("{:<8}{:<12}{:<24}{}".format("field", "component", "monomial", "coefficient"))
    for i, components in enumerate(approx.fields):
        for j, terms in enumerate(components):
            for coeff, exponents in terms:
                monomial = format_monomial(exponents, "z")
                lines.append("{:<8}{:<12}{:<24}{}".format(i + 1, j + 1, monomial, format_float(coeff)))

    lines.append("triangular: {}".format(check_triangular(approx)))
    lines.append("{:<8}{:<12}{:<8}{}".format("field", "component", "weight", "slope"))
    slopes = approximation_slopes(pipeline.chart, pipeline.model, approx, seed=scenario.seed)
    for (i, j), slope in sorted(slopes.items()):
        lines.append("{:<8}{:<12}{:<8}{}".format(i + 1, j + 1, pipeline.chart.weights[j], format_float(slope)))

    return lines


def _write_outputs(trace, config, name, svg):
    setup_data_folder(config["OUT_DIR"])
    write_trace(trace, config["OUTPUT_TRACE"])
    write_summary(trace, config["OUTPUT_SUMMARY"], name)

    if (svg or config["OUTPUT_PLOT"]) and len(trace) > 1:
        plot_runs([trace], config["OUTPUT_SVG"], [name])


def cmd_run(config, name="", svg=False):
    """
    Runs the closed loop of a scenario and writes its trace, its summary and (optionally) its SVG figure.

    Returns:
        :obj:`ClosedLoopTrace <nhmpc.mpc.ClosedLoopTrace>`: The trace.

    Raises:
        :obj:`RolloutDivergence <nhmpc.ocp.RolloutDivergence>`: If the closed loop diverges. The partial trace is
            written before raising.
    """

    scenario = Scenario.from_config(config, name)

    try:
        trace = run_closed_loop(scenario)

    except RolloutDivergence as e:
        if getattr(e, "trace", None) is not None:
            _write_outputs(e.trace, config, name, svg=False)

        raise

    _write_outputs(trace, config, name, svg)
    return trace


def _run_in_worker(config, name):
    # Spawned workers start with a fresh interpreter, so logging is set up again (silent, to the scenario log)
    setup_data_folder(config["OUT_DIR"])
    if not nhmpc.logger.configured:
        setup_logging(config["OUTPUT_LOG"], silent=True)

    return cmd_run(config, name)


def cmd_compare(configs, names, out_dir, svg=False):
    """
    Runs two scenarios of the same vehicle concurrently and compares them.

    Args:
        configs (:obj:`list`): the two config dicts.
        names (:obj:`list`): their labels.
        out_dir (:obj:`str`): where the combined figure is written.
        svg (:obj:`bool`): whether to write the combined figure.

    Returns:
        :obj:`list`: The lines of the side-by-side report.

    Raises:
        :obj:`InvalidParameter`: If the vehicles or the initial states differ.
    """

    first, second = configs
    for key in ("VEHICLE_NAME", "INITIAL_STATE_X0"):
        if first[key] != second[key]:
            raise InvalidParameter("Compared scenarios must share vehicle and initial state", field=key)

    with get_context("spawn").Pool(2) as pool:
        traces = pool.starmap(_run_in_worker, zip(configs, names))

    if svg:
        setup_data_folder(out_dir)
        plot_runs(traces, os.path.join(out_dir, "compare.svg"), names)

    return comparison(traces[0], traces[1], names)


def main(command, args, conf_paths, command_line_conf, out_dir=OUT_DIR, svg=False, dump_config=False):
    """
    Runs a command.

    Returns:
        :obj:`int`: The exit code: 0 on success, 1 on numerical failure, 2 on usage or configuration errors.
    """

    if command == "help":
        if args:
            help_fn = HELP.get(args[0])
            if help_fn is None:
                print("Unknown command. Use help to check the list of available commands", file=sys.stderr)
                return EXIT_USAGE_ERROR

            print(help_fn())

        else:
            print(show_usage())

        return EXIT_OK

    conf_paths = list(conf_paths) + list(args)
    expected = 2 if command == "compare" else 1
    if len(conf_paths) != expected:
        print("{} expects {} scenario file(s), got {}".format(command, expected, len(conf_paths)), file=sys.stderr)
        return EXIT_USAGE_ERROR

    try:
        loaded = []
        for i, conf_path in enumerate(conf_paths):
            scenario_dir = out_dir
            if command == "compare":
                # Each compared scenario writes to its own folder
                stem = os.path.splitext(os.path.basename(conf_path))[0]
                scenario_dir = os.path.join(out_dir, stem if i == 0 or stem != loaded[0][2] else stem + "-2")

            loaded.append(load_config(conf_path, command_line_conf, scenario_dir))

        if dump_config:
            for config_loader, config, _ in loaded:
                print(config_loader.dump(config))

            return EXIT_OK

        config_loader, config, name = loaded[0]
        if not nhmpc.logger.configured:
            if command == "run":
                setup_data_folder(config["OUT_DIR"])
                setup_logging(config["OUTPUT_LOG"])

            else:
                setup_logging()

        if command == "analyze":
            print("\n".join(cmd_analyze(config, name)))

        elif command == "chart":
            print("\n".join(cmd_chart(config, name)))

        elif command == "run":
            trace = cmd_run(config, name, svg)
            print("\n".join("{}: {}".format(key, value) for key, value in summary(trace, name).items()))

        elif command == "compare":
            names = [os.path.basename(config["OUT_DIR"]) for _, config, _ in loaded]
            print("\n".join(cmd_compare([config for _, config, _ in loaded], names, out_dir, svg)))

    except (ConfigError, InvalidParameter) as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE_ERROR

    except BasicException as e:
        logger.error("Numerical failure", error=e.msg)
        print(str(e), file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE

    return EXIT_OK


def run():
    command_line_conf = {}
    conf_paths = []
    out_dir = OUT_DIR
    svg = False
    dump_config = False

    try:
        opts, args = getopt(argv[1:], "h", ["config=", "out=", "svg", "seed=", "dump-config", "help"])

    except GetoptError as e:
        print(e, file=sys.stderr)
        sys.exit(EXIT_USAGE_ERROR)

    for opt, arg in opts:
        if opt in ["--config"]:
            conf_paths.append(os.path.expanduser(arg))

        if opt in ["--out"]:
            out_dir = os.path.abspath(os.path.expanduser(arg))

        if opt in ["--svg"]:
            svg = True

        if opt in ["--seed"]:
            try:
                command_line_conf["SOLVER_SEED"] = int(arg)
            except ValueError:
                print("seed must be an integer", file=sys.stderr)
                sys.exit(EXIT_USAGE_ERROR)

        if opt in ["--dump-config"]:
            dump_config = True

        if opt in ["-h", "--help"]:
            print(show_usage())
            sys.exit(EXIT_OK)

    command = args.pop(0) if args else None
    if command in COMMANDS:
        sys.exit(main(command, args, conf_paths, command_line_conf, out_dir, svg, dump_config))

    elif not command:
        print("No command provided. Use help to check the list of available commands", file=sys.stderr)

    else:
        print("Unknown command. Use help to check the list of available commands", file=sys.stderr)

    sys.exit(EXIT_USAGE_ERROR)


if __name__ == "__main__":
    run()
