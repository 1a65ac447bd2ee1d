"""Static SVG figures of finished closed-loop runs: the trajectory in the plane and the value function."""

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

GLYPHS = 6
BODY_LENGTH = 0.1
TRAILERS = {"one_trailer": ("l1",), "two_trailer": ("l1", "l2")}


def _rectangle(center, heading, length, width):
    c, s = np.cos(heading), np.sin(heading)
    forward, side = np.array([c, s]), np.array([-s, c])
    corners = [(0.5, 0.5), (0.5, -0.5), (-0.5, -0.5), (-0.5, 0.5)]
    return np.array([center + a * length * forward + b * width * side for a, b in corners])


def vehicle_outline(model_name, params, x):
    """
    Returns the outline of a vehicle at state ``x``: a list of ``(polygon, segment)`` pairs, the first one being the
    towing body with its heading tick and the rest the trailers with their drawbars.
    """

    position, theta = np.asarray(x[:2], dtype=float), float(x[2])
    heading = np.array([np.cos(theta), np.sin(theta)])

    if model_name == "kinematic_car":
        # The reference point of the car is its rear axle
        length = params["l"]
        center = position + 0.5 * length * heading

    else:
        length, center = BODY_LENGTH, position

    parts = [(_rectangle(center, theta, length, 0.6 * length), np.array([center, center + 0.75 * length * heading]))]

    hitch = position
    for k, key in enumerate(TRAILERS.get(model_name, ())):
        angle = float(x[3 + k])
        axle = hitch - params[key] * np.array([np.cos(angle), np.sin(angle)])
        parts.append((_rectangle(axle, angle, 0.6 * BODY_LENGTH, 0.5 * BODY_LENGTH), np.array([axle, hitch])))
        hitch = axle

    return parts


def _draw_trajectory(ax, trace, label, color):
    ax.plot(trace.states[:, 0], trace.states[:, 1], color=color, label=label)
    for k in np.unique(np.linspace(0, len(trace) - 1, GLYPHS).astype(int)):
        for polygon, segment in vehicle_outline(trace.model_name, trace.params, trace.states[k]):
            ax.add_patch(Polygon(polygon, closed=True, fill=False, edgecolor=color, linewidth=0.8))
            ax.plot(segment[:, 0], segment[:, 1], color=color, linewidth=0.8)

    ax.plot(trace.d[0], trace.d[1], marker="x", color="black")


def _draw_values(ax, trace, label, color):
    values = np.where(trace.values > 0, trace.values, np.nan)
    ax.semilogy(trace.times, values, color=color, label=label)


def plot_runs(traces, path, labels=None):
    """
    Saves an SVG with the closed-loop trajectories in the plane (with vehicle glyphs at evenly spaced instants) and the
    value functions on a log scale. Several traces are overlaid.

    Args:
        traces (:obj:`list`): the :obj:`ClosedLoopTrace <nhmpc.mpc.ClosedLoopTrace>` to draw.
        path (:obj:`str`): the output file.
        labels (:obj:`list`): the legend entries. Optional.
    """

    labels = labels or [trace.model_name for trace in traces]
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]

    fig, (ax_plane, ax_values) = plt.subplots(1, 2, figsize=(11, 4.5))
    for i, (trace, label) in enumerate(zip(traces, labels)):
        color = colors[i % len(colors)]
        _draw_trajectory(ax_plane, trace, label, color)
        _draw_values(ax_values, trace, label, color)

    ax_plane.set_xlabel("x (m)")
    ax_plane.set_ylabel("y (m)")
    ax_plane.set_aspect("equal", adjustable="datalim")
    ax_plane.legend()
    ax_values.set_xlabel("t (s)")
    ax_values.set_ylabel("V")
    ax_values.legend()

    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
