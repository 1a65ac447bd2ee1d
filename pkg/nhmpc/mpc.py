"""
The receding-horizon closed loop and the tools used to judge it: value-function statistics, stationarity detection and
the certifier of the states where a quadratic cost freezes the vehicle.
"""

import numpy as np
from dataclasses import dataclass
from scipy.optimize import least_squares

from common.exceptions import BasicException, InvalidParameter, ContractViolation
from common.constants import INSUFFICIENCY_TOLERANCE, ROOT_FINDING_RESTARTS, CONVERGENCE_FLOOR, RK4_SUBSTEPS

from nhmpc.logger import get_logger
from nhmpc.models import make_model
from nhmpc.liealg import build_filtration
from nhmpc.privcoord import build_chart, ChartedModel
from nhmpc.cost import TAILORED, QUADRATIC, build_tailored, build_quadratic, scale_to_initial
from nhmpc.ocp import OcpProblem, SolverSettings, RolloutDivergence, solve, shift_warm_start, MAX_ITER

logger = get_logger(component="ClosedLoop")

BUILTIN_MODELS = ("unicycle", "kinematic_car", "one_trailer", "two_trailer")
PLATEAU_RELATIVE_BAND = 1e-6


class NoSolutionFound(BasicException):
    """Raised when the insufficiency certifier cannot find a state within the restart budget."""


def _pairs(flat, n_u):
    if not flat:
        return None

    if len(flat) != 2 * n_u:
        raise InvalidParameter("Input bounds need a (low, high) pair per input", bounds=flat, n_u=n_u)

    return [(flat[2 * i], flat[2 * i + 1]) for i in range(n_u)]


@dataclass(frozen=True)
class Scenario:
    """
    Everything needed to run a closed loop.

    Attributes:
        model_name (:obj:`str`): the catalog name of the vehicle.
        params (:obj:`dict`): the geometric constants of the vehicle.
        input_bounds (:obj:`tuple`): ``(low, high)`` per input, or None for the model defaults.
        d (:obj:`numpy.ndarray`): the setpoint.
        x0 (:obj:`numpy.ndarray`): the initial state.
        cost_kind (:obj:`str`): ``tailored`` or ``quadratic``.
        state_weights (:obj:`tuple`): ``q_i`` (tailored) or the diagonal of ``Q`` (quadratic). Empty for ones.
        input_weights (:obj:`tuple`): ``r_j`` (tailored) or the diagonal of ``R`` (quadratic). Empty for ones.
        cancel_gcd (:obj:`bool`): whether tailored exponents are divided by their GCD.
        scale (:obj:`str` or :obj:`float`): ``auto`` (normalize the initial cost to 1) or an explicit ``sigma``.
        dt (:obj:`float`): the sampling time (s).
        horizon (:obj:`int`): the prediction horizon ``H``.
        duration (:obj:`float`): the simulated time (s), a multiple of ``dt``.
        settings (:obj:`SolverSettings <nhmpc.ocp.SolverSettings>`): the solver settings (the seed lives here).
        max_depth (:obj:`int`): the deepest bracket explored by the Lie analysis.
        name (:obj:`str`): a label for reports.
    """

    model_name: str
    params: dict
    input_bounds: tuple
    d: np.ndarray
    x0: np.ndarray
    cost_kind: str = TAILORED
    state_weights: tuple = ()
    input_weights: tuple = ()
    cancel_gcd: bool = True
    scale: object = "auto"
    dt: float = 0.25
    horizon: int = 60
    duration: float = 15.0
    settings: SolverSettings = SolverSettings()
    max_depth: int = 6
    name: str = ""

    def __post_init__(self):
        if self.cost_kind not in (TAILORED, QUADRATIC):
            raise InvalidParameter("Unknown cost kind", kind=self.cost_kind)

        if not self.dt > 0 or self.horizon < 1 or self.duration < 0:
            raise InvalidParameter("Invalid horizon", dt=self.dt, steps=self.horizon, duration=self.duration)

        steps = round(self.duration / self.dt)
        if abs(steps * self.dt - self.duration) > 1e-9 * max(1.0, self.duration):
            raise InvalidParameter("The duration must be a multiple of the sampling time", dt=self.dt)

        if self.scale != "auto" and not (isinstance(self.scale, (int, float)) and self.scale > 0):
            raise InvalidParameter("The cost scale must be 'auto' or a positive number", scale=self.scale)

    @property
    def steps(self):
        """Number of sampling intervals in the simulation."""

        return int(round(self.duration / self.dt))

    @property
    def seed(self):
        return self.settings.seed

    def build_model(self):
        return make_model(self.model_name, self.params, self.input_bounds)

    @classmethod
    def from_config(cls, config, name=""):
        """
        Builds a scenario from a config dict (as returned by :meth:`ConfigLoader.build_config`).

        Empty setpoints default to the origin.

        Raises:
            :obj:`InvalidParameter`: If the values are inconsistent with the vehicle.
        """

        model_name = config["VEHICLE_NAME"]
        params = {"l": config["VEHICLE_L"], "l1": config["VEHICLE_L1"], "l2": config["VEHICLE_L2"]}
        model = make_model(model_name, params)
        bounds = _pairs(config["VEHICLE_INPUT_BOUNDS"], model.n_u)

        d = np.array(config["SETPOINT_D"] or np.zeros(model.n_x), dtype=float)
        x0 = np.array(config["INITIAL_STATE_X0"], dtype=float)
        for label, vector in (("setpoint", d), ("initial state", x0)):
            if vector.shape != (model.n_x,):
                raise InvalidParameter("Wrong {} dimension".format(label), expected=model.n_x, got=vector.size)

        scale = config["COST_SCALE"].strip().lower()
        if scale != "auto":
            try:
                scale = float(scale)
            except ValueError:
                raise InvalidParameter("The cost scale must be 'auto' or a positive number", scale=scale)

        settings = SolverSettings(
            max_iter=config["SOLVER_MAX_ITER"],
            tolerance=config["SOLVER_TOLERANCE"],
            restarts=config["SOLVER_RESTARTS"],
            substeps=config["SOLVER_SUBSTEPS"],
            warm_start=config["SOLVER_WARM_START"],
            seed=config["SOLVER_SEED"],
        )

        return cls(
            model_name=model_name,
            params=params,
            input_bounds=tuple(bounds) if bounds else None,
            d=d,
            x0=x0,
            cost_kind=config["COST_KIND"],
            state_weights=tuple(config["COST_STATE_WEIGHTS"]),
            input_weights=tuple(config["COST_INPUT_WEIGHTS"]),
            cancel_gcd=config["COST_CANCEL_GCD"],
            scale=scale,
            dt=config["HORIZON_DT"],
            horizon=config["HORIZON_STEPS"],
            duration=config["HORIZON_DURATION"],
            settings=settings,
            max_depth=config["VEHICLE_MAX_DEPTH"],
            name=name,
        )


@dataclass(frozen=True)
class Pipeline:
    """The analysis products a closed loop runs on: filtration, chart, model in the chart and stage cost."""

    model: object
    filtration: object
    chart: object
    charted: object
    cost: object


def build_pipeline(scenario):
    """
    Runs the analysis of a scenario: filtration and chart at the setpoint, then the stage cost.

    Returns:
        :obj:`Pipeline`: The analysis products.
    """

    model = scenario.build_model()
    filtration = build_filtration(model, scenario.d, scenario.max_depth, seed=scenario.seed)
    chart = build_chart(filtration, model)
    charted = ChartedModel(model, chart)

    if scenario.cost_kind == TAILORED:
        cost = build_tailored(
            chart,
            scenario.state_weights or None,
            scenario.input_weights or None,
            cancel_gcd=scenario.cancel_gcd,
            s=(1,) * model.n_u,
        )
        cost = scale_to_initial(cost, scenario.x0) if scenario.scale == "auto" else cost.with_scale(scenario.scale)

    else:
        Q = np.diag(scenario.state_weights or np.ones(model.n_x))
        R = np.diag(scenario.input_weights or np.ones(model.n_u))
        cost = build_quadratic(Q, R, scenario.d)

    return Pipeline(model=model, filtration=filtration, chart=chart, charted=charted, cost=cost)


@dataclass(frozen=True)
class ClosedLoopTrace:
    """
    The record of a closed loop, one row per sampling instant ``t_k = k * dt``, ``k = 0..N``.

    Attributes:
        times (:obj:`numpy.ndarray`): the sampling instants.
        states (:obj:`numpy.ndarray`): the plant states, in original coordinates.
        inputs (:obj:`numpy.ndarray`): the first input block of each OCP solution. Rows ``0..N-1`` were applied; the
            last row is planned but not applied.
        values (:obj:`numpy.ndarray`): the value function ``V(t_k)`` (optimal objective).
        iterations (:obj:`numpy.ndarray`): solver iterations per instant.
        statuses (:obj:`tuple`): solver status per instant.
        d (:obj:`numpy.ndarray`): the setpoint.
        model_name (:obj:`str`): the vehicle.
        params (:obj:`dict`): the geometric constants of the vehicle.
        dt (:obj:`float`): the sampling time.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    values: np.ndarray
    iterations: np.ndarray
    statuses: tuple
    d: np.ndarray
    model_name: str
    params: dict
    dt: float

    def __len__(self):
        return len(self.times)

    @property
    def applied_inputs(self):
        return self.inputs[:-1]

    @property
    def final_deviation(self):
        """``|x(T) - d|`` per state."""

        return np.abs(self.states[-1] - self.d)

    @property
    def converged(self):
        """Whether the value function reached the numerical floor ``1e-12 * V(0)``."""

        return self.values[0] == 0.0 or self.values[-1] < CONVERGENCE_FLOOR * self.values[0]


def _plant_step(model, x, u, dt, substeps):
    h = dt / substeps
    for _ in range(substeps):
        k1 = model.dynamics(x, u)
        k2 = model.dynamics(x + 0.5 * h * k1, u)
        k3 = model.dynamics(x + 0.5 * h * k2, u)
        k4 = model.dynamics(x + h * k3, u)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    return x


def simulate(model, x0, inputs, dt, substeps=RK4_SUBSTEPS):
    """
    Simulates the plant (the exact model, RK4) under piecewise-constant inputs.

    Returns:
        :obj:`numpy.ndarray`: ``(len(inputs) + 1) x n_x`` states starting at ``x0``.
    """

    states = [model.check_state(x0)]
    for u in np.asarray(inputs, dtype=float):
        states.append(_plant_step(model, states[-1], model.check_input(u), dt, substeps))

    return np.array(states)


def _trace(scenario, rows):
    times, states, inputs, values, iterations, statuses = zip(*rows)
    return ClosedLoopTrace(
        times=np.array(times),
        states=np.array(states),
        inputs=np.array(inputs),
        values=np.array(values),
        iterations=np.array(iterations, dtype=int),
        statuses=tuple(statuses),
        d=np.array(scenario.d),
        model_name=scenario.model_name,
        params=dict(scenario.params),
        dt=scenario.dt,
    )


def run_closed_loop(scenario, pipeline=None):
    """
    Runs the receding-horizon loop: at each sampling instant the plant state is mapped to privileged coordinates, the
    OCP is solved (warm-started with the shifted previous solution) and its first input block is applied to the plant.

    Args:
        scenario (:obj:`Scenario`): the scenario.
        pipeline (:obj:`Pipeline`): the analysis products, if already built.

    Returns:
        :obj:`ClosedLoopTrace`: The trace, with ``duration / dt + 1`` rows.

    Raises:
        :obj:`RolloutDivergence`: If the plant state stops being finite. The partial trace is attached to the
            exception as ``trace``.
    """

    pipeline = pipeline or build_pipeline(scenario)
    model, chart, settings = pipeline.model, pipeline.chart, scenario.settings
    rng = np.random.default_rng(scenario.seed)

    x = model.check_state(scenario.x0)
    problem = OcpProblem(
        pipeline.charted,
        pipeline.cost,
        scenario.dt,
        scenario.horizon,
        chart.forward(x),
        model.input_bounds,
        settings.substeps,
    )
    logger.info("Closed loop started", scenario=scenario.name, model=model.name, steps=scenario.steps)

    rows = []
    guess = None
    for k in range(scenario.steps + 1):
        problem = problem.with_initial_state(chart.forward(x))
        solution = solve(problem, guess, settings, rng)
        rows.append(
            (k * scenario.dt, x, solution.first_input, solution.objective, solution.iterations, solution.status)
        )
        logger.debug("Closed-loop step", k=k, value=solution.objective, status=solution.status)

        if solution.status == MAX_ITER:
            logger.warning("Solver reached its iteration budget", k=k, residual=solution.residual)

        if k == scenario.steps:
            break

        x = _plant_step(model, x, solution.first_input, scenario.dt, settings.substeps)
        if not np.all(np.isfinite(x)):
            logger.error("The plant state diverged", k=k)
            error = RolloutDivergence("The closed loop diverged", step=k + 1)
            error.trace = _trace(scenario, rows)
            raise error

        guess = shift_warm_start(solution) if settings.warm_start else None

    trace = _trace(scenario, rows)
    logger.info("Closed loop finished", scenario=scenario.name, final_deviation=trace.final_deviation.tolist())

    return trace


def insufficiency_residual(model, Q, x, d=None):
    """
    Computes ``||(x - d)^T Q G(x)||``. States where it vanishes make the zero input stationary for a quadratic cost.
    """

    x = model.check_state(x)
    d = np.zeros(model.n_x) if d is None else np.asarray(d, dtype=float)
    return float(np.linalg.norm((x - d) @ np.asarray(Q, dtype=float) @ model.input_matrix(x)))


def find_insufficiency_state(model, Q, eps, d=None, seed=0, restarts=ROOT_FINDING_RESTARTS):
    """
    Finds a state ``x0 != d`` with ``||x0 - d|| <= eps`` where ``(x0 - d)^T Q G(x0) = 0``.

    For the built-in vehicles with ``Q = I`` around the origin the closed form ``(0, eps / 2, 0, ..., 0)`` is returned
    (orientations and steering zero, position on the blocked lateral direction). Otherwise the ``n_u`` equations are
    solved by damped least squares on the sphere of radius ``eps / 2`` from random starts.

    Raises:
        :obj:`IndefiniteMatrix <nhmpc.cost.IndefiniteMatrix>`: If ``Q`` is not symmetric positive definite.
        :obj:`NoSolutionFound`: If no start converges within ``restarts`` attempts.
    """

    if not eps > 0:
        raise InvalidParameter("The radius must be positive", eps=eps)

    Q = build_quadratic(Q, np.eye(model.n_u)).Q
    if Q.shape != (model.n_x, model.n_x):
        raise ContractViolation("Wrong weight matrix dimension", expected=model.n_x, got=Q.shape)

    d = np.zeros(model.n_x) if d is None else model.check_state(d)
    radius = eps / 2

    if model.name in BUILTIN_MODELS and np.allclose(Q, np.eye(model.n_x)) and not np.any(d):
        x0 = np.zeros(model.n_x)
        x0[1] = radius
        return x0

    def residuals(v):
        x = d + v
        return np.append((x - d) @ Q @ model.input_matrix(x), np.linalg.norm(v) - radius)

    rng = np.random.default_rng(seed)
    for attempt in range(restarts):
        direction = rng.standard_normal(model.n_x)
        v0 = radius * direction / np.linalg.norm(direction)
        result = least_squares(residuals, v0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)

        x0 = d + result.x
        distance = np.linalg.norm(result.x)
        if 0 < distance <= eps and insufficiency_residual(model, Q, x0, d) < INSUFFICIENCY_TOLERANCE:
            logger.debug("Insufficiency state found", attempt=attempt, x0=x0.tolist())
            return x0

    raise NoSolutionFound("No insufficiency state found", model=model.name, eps=eps, restarts=restarts)


def stationarity_check(trace, tol):
    """Returns True iff ``max_t ||x(t) - x(0)||_inf <= tol``."""

    if len(trace) == 0:
        raise InvalidParameter("The trace is empty")

    return float(np.max(np.abs(trace.states - trace.states[0]))) <= tol


@dataclass(frozen=True)
class ValueFunctionReport:
    """
    Monotonicity statistics of a value function.

    Attributes:
        max_increase (:obj:`float`): the largest increase between consecutive samples (0 if none).
        max_relative_increase (:obj:`float`): the largest relative increase before the plateau.
        floor (:obj:`float`): the smallest value.
        decrease_ratio (:obj:`float`): ``V(T) / V(0)`` (0 when ``V(0) = 0``).
        plateau_start (:obj:`int`): the first sample of the final plateau.
        stagnating (:obj:`bool`): whether the plateau starts at the first sample.
    """

    max_increase: float
    max_relative_increase: float
    floor: float
    decrease_ratio: float
    plateau_start: int
    stagnating: bool


def _plateau_start(values):
    # The tail is a plateau while its spread stays within a relative band (plus an absolute floor)
    absolute = CONVERGENCE_FLOOR * abs(values[0])
    start = len(values) - 1
    low = high = values[-1]
    for k in range(len(values) - 2, -1, -1):
        low, high = min(low, values[k]), max(high, values[k])
        if high - low > PLATEAU_RELATIVE_BAND * abs(values[k]) + absolute:
            break

        start = k

    return start


def value_function_report(trace):
    """
    Computes monotonicity statistics of the value function of a trace (or of a plain sequence of values).

    Raises:
        :obj:`InvalidParameter`: If there are fewer than two samples.
    """

    values = np.asarray(trace.values if isinstance(trace, ClosedLoopTrace) else trace, dtype=float)
    if values.size < 2:
        raise InvalidParameter("At least two samples are needed", samples=int(values.size))

    increases = np.diff(values)
    plateau = _plateau_start(values)

    relative = 0.0
    for k in range(plateau):
        if increases[k] > 0:
            relative = max(relative, increases[k] / max(abs(values[k]), np.finfo(float).tiny))

    return ValueFunctionReport(
        max_increase=float(max(0.0, increases.max())),
        max_relative_increase=float(relative),
        floor=float(values.min()),
        decrease_ratio=float(values[-1] / values[0]) if values[0] != 0 else 0.0,
        plateau_start=int(plateau),
        stagnating=bool(plateau == 0 and values[0] > 0),
    )
