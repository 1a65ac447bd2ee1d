import csv
import numpy as np

from common.exceptions import ConfigError
from common.tools import format_float, format_vector

from nhmpc.mpc import stationarity_check, value_function_report

STATIONARY_TOLERANCE = 1e-6


def trace_header(n_x, n_u):
    """Column names of a trace file: ``t, x1..xn, u1..um, V, iters, status``."""

    return (
        ["t"]
        + ["x{}".format(i + 1) for i in range(n_x)]
        + ["u{}".format(j + 1) for j in range(n_u)]
        + ["V", "iters", "status"]
    )


def trace_rows(trace):
    """Yields the rows of a trace as lists of strings (shortest round-trip floats)."""

    for k in range(len(trace)):
        yield (
            [format_float(trace.times[k])]
            + [format_float(v) for v in trace.states[k]]
            + [format_float(v) for v in trace.inputs[k]]
            + [format_float(trace.values[k]), str(int(trace.iterations[k])), trace.statuses[k]]
        )


def write_trace(trace, path):
    """
    Writes a closed-loop trace as a comma separated file, one row per sampling instant.

    Args:
        trace (:obj:`ClosedLoopTrace <nhmpc.mpc.ClosedLoopTrace>`): the trace.
        path (:obj:`str`): the output file.
    """

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(trace_header(trace.states.shape[1], trace.inputs.shape[1]))
        writer.writerows(trace_rows(trace))


def read_trace(path):
    """
    Reads a trace file back.

    Returns:
        :obj:`dict`: ``t``, ``states``, ``inputs``, ``V`` and ``iters`` as numpy arrays and ``status`` as a list.

    Raises:
        :obj:`ConfigError`: If the header is not a trace header.
    """

    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)

    n_x = sum(1 for name in header if name.startswith("x"))
    n_u = sum(1 for name in header if name.startswith("u"))
    if header != trace_header(n_x, n_u):
        raise ConfigError("Not a trace file", path=path)

    numbers = np.array([[float(v) for v in row[:-1]] for row in rows]).reshape(len(rows), len(header) - 1)
    return {
        "t": numbers[:, 0],
        "states": numbers[:, 1 : 1 + n_x],
        "inputs": numbers[:, 1 + n_x : 1 + n_x + n_u],
        "V": numbers[:, -2],
        "iters": numbers[:, -1].astype(int),
        "status": [row[-1] for row in rows],
    }


def summary(trace, name=""):
    """
    Summarizes a trace: final deviation per state, value-function statistics and verdicts.

    Returns:
        :obj:`dict`: printable values, in a stable order.
    """

    info = {
        "scenario": name,
        "model": trace.model_name,
        "duration": format_float(trace.times[-1]),
        "final_deviation": format_vector(trace.final_deviation),
        "V0": format_float(trace.values[0]),
        "VT": format_float(trace.values[-1]),
        "total_iterations": str(int(trace.iterations.sum())),
        "max_iter_steps": str(sum(1 for s in trace.statuses if s == "max_iter")),
        "converged": str(bool(trace.converged)).lower(),
        "stationary": str(stationarity_check(trace, STATIONARY_TOLERANCE)).lower(),
    }

    if len(trace) > 1:
        report = value_function_report(trace)
        info["max_relative_increase"] = format_float(report.max_relative_increase)
        info["plateau_start"] = format_float(trace.times[report.plateau_start])
        info["stagnating"] = str(report.stagnating).lower()

    return info


def write_summary(trace, path, name=""):
    with open(path, "w") as f:
        f.writelines("{}: {}\n".format(key, value) for key, value in summary(trace, name).items())


def comparison(trace_a, trace_b, names=("a", "b")):
    """
    Compares two traces side by side: final deviations, value function, iterations and verdicts.

    Returns:
        :obj:`list`: the lines of the report. Numeric rows end with the difference ``a - b``.
    """

    lines = ["{:<24}{:>24}{:>24}{:>24}".format("", names[0], names[1], "difference")]

    def numeric(label, a, b):
        lines.append("{:<24}{:>24}{:>24}{:>24}".format(label, format_float(a), format_float(b), format_float(a - b)))

    for i, (a, b) in enumerate(zip(trace_a.final_deviation, trace_b.final_deviation)):
        numeric("|x{}(T) - d{}|".format(i + 1, i + 1), a, b)

    numeric("V(0)", trace_a.values[0], trace_b.values[0])
    numeric("V(T)", trace_a.values[-1], trace_b.values[-1])
    numeric("iterations", int(trace_a.iterations.sum()), int(trace_b.iterations.sum()))

    for label, verdict in (
        ("converged", lambda t: t.converged),
        ("stationary", lambda t: stationarity_check(t, STATIONARY_TOLERANCE)),
    ):
        lines.append(
            "{:<24}{:>24}{:>24}".format(label, str(bool(verdict(trace_a))).lower(), str(bool(verdict(trace_b))).lower())
        )

    return lines
