"""
Direct single-shooting transcription of the finite-horizon optimal control problem.

Inputs are held constant over each sampling interval, the dynamics are integrated in privileged coordinates with a
fixed-step RK4 scheme and the objective is ``dt * sum_k l(z_k, u_k)``. Rollout, objective and gradient are jitted with
jax; the gradient is the reverse-mode derivative of the discrete rollout (the discrete adjoint).
"""

import jax
import jax.numpy as jnp
import numpy as np
from collections import deque
from scipy.optimize import minimize
from dataclasses import dataclass

from common.exceptions import BasicException, InvalidParameter, ContractViolation
from common.constants import (
    RK4_SUBSTEPS,
    SOLVER_MAX_ITER,
    SOLVER_TOLERANCE,
    NONMONOTONE_WINDOW,
    ARMIJO_SLOPE,
    RANDOM_RESTARTS,
    NEWTON_MAX_ITER,
    NEWTON_EIGENVALUE_FLOOR,
    ROUNDOFF_BAND,
    DILATION_FLOOR,
)

from nhmpc.logger import get_logger
from nhmpc.cost import TAILORED

logger = get_logger(component="OcpSolver")

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE_GUESS = "infeasible_guess"

MIN_STEP = 1e-16
MAX_STEP = 1e6


class RolloutDivergence(BasicException):
    """Raised when the predicted states of a rollout stop being finite."""


@dataclass(frozen=True)
class SolverSettings:
    """
    Settings of the OCP solver.

    Attributes:
        max_iter (:obj:`int`): iteration budget per start (projected gradient plus refinement).
        tolerance (:obj:`float`): relative tolerance on the norm of the projected gradient.
        restarts (:obj:`int`): random starts tried when the zero input is a spurious stationary point.
        substeps (:obj:`int`): RK4 substeps per sampling interval.
        warm_start (:obj:`bool`): whether the closed loop shifts the previous solution as the next guess.
        seed (:obj:`int`): seed of the random restarts.
        window (:obj:`int`): length of the non-monotone line-search window.
    """

    max_iter: int = SOLVER_MAX_ITER
    tolerance: float = SOLVER_TOLERANCE
    restarts: int = RANDOM_RESTARTS
    substeps: int = RK4_SUBSTEPS
    warm_start: bool = True
    seed: int = 0
    window: int = NONMONOTONE_WINDOW

    def __post_init__(self):
        if self.max_iter < 1 or self.substeps < 1 or self.restarts < 0 or self.window < 1:
            raise InvalidParameter(
                "Solver budgets must be positive",
                max_iter=self.max_iter,
                substeps=self.substeps,
                restarts=self.restarts,
                window=self.window,
            )

        if not self.tolerance > 0:
            raise InvalidParameter("The solver tolerance must be positive", tolerance=self.tolerance)


@dataclass(frozen=True)
class OcpSolution:
    """
    The outcome of a solve.

    Attributes:
        inputs (:obj:`numpy.ndarray`): ``H x n_u`` piecewise-constant inputs, within bounds.
        states (:obj:`numpy.ndarray`): ``(H + 1) x n_x`` predicted states in privileged coordinates.
        objective (:obj:`float`): the objective of ``inputs``.
        iterations (:obj:`int`): iterations spent, over every start.
        residual (:obj:`float`): norm of the projected gradient at ``inputs``.
        status (:obj:`str`): ``converged``, ``max_iter`` or ``infeasible_guess`` (the given guess diverged and the
            solve started from zero inputs instead).
        restarts (:obj:`int`): random starts tried.
    """

    inputs: np.ndarray
    states: np.ndarray
    objective: float
    iterations: int
    residual: float
    status: str
    restarts: int = 0

    @property
    def first_input(self):
        return self.inputs[0]


def _rk4_interval(charted, dt, substeps):
    h = dt / substeps

    def step(z, u):
        k1 = charted.dynamics(z, u)
        k2 = charted.dynamics(z + 0.5 * h * k1, u)
        k3 = charted.dynamics(z + 0.5 * h * k2, u)
        k4 = charted.dynamics(z + h * k3, u)
        return z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def interval(z, u):
        return jax.lax.fori_loop(0, substeps, lambda _, s: step(s, u), z)

    return interval


class _Transcription:
    """The jitted rollout, objective and gradient shared by every problem with the same model, cost and horizon."""

    def __init__(self, charted, cost, dt, horizon, substeps):
        interval = _rk4_interval(charted, dt, substeps)
        chart = charted.chart

        def rollout(z0, inputs):
            def body(z, u):
                z_next = interval(z, u)
                return z_next, z_next

            _, states = jax.lax.scan(body, z0, inputs)
            return jnp.concatenate([z0[None, :], states])

        def stage(z, u):
            x = chart.inverse(z, jnp) if cost.needs_state else None
            return cost.evaluate(x, u, z=z, xp=jnp)

        def objective(z0, inputs):
            states = rollout(z0, inputs)
            return dt * jnp.sum(jax.vmap(stage)(states[:-1], inputs))

        self.rollout = jax.jit(rollout)
        self.objective = jax.jit(objective)
        self.value_and_grad = jax.jit(jax.value_and_grad(objective, argnums=1))
        self.hessian = jax.jit(jax.hessian(objective, argnums=1))


class OcpProblem:
    """
    A finite-horizon OCP in privileged coordinates.

    Args:
        charted (:obj:`ChartedModel <nhmpc.privcoord.ChartedModel>`): the model written in the chart.
        cost (:obj:`StageCost <nhmpc.cost.StageCost>`): the stage cost.
        dt (:obj:`float`): the sampling time (s).
        horizon (:obj:`int`): the number of sampling intervals ``H``.
        z0 (:obj:`array`): the initial state in privileged coordinates.
        input_bounds (:obj:`list`): ``(low, high)`` per input. Defaults to the model's bounds.
        substeps (:obj:`int`): RK4 substeps per sampling interval.

    Raises:
        :obj:`InvalidParameter`: If ``dt``, ``horizon`` or the bounds are invalid.
        :obj:`ContractViolation`: If the dimensions of ``z0`` or of the cost do not match the model.
    """

    def __init__(self, charted, cost, dt, horizon, z0, input_bounds=None, substeps=RK4_SUBSTEPS, _transcription=None):
        if not dt > 0:
            raise InvalidParameter("The sampling time must be positive", dt=dt)

        if horizon < 1 or substeps < 1:
            raise InvalidParameter("Horizon and substeps must be positive", horizon=horizon, substeps=substeps)

        if cost.n_x != charted.n_x or cost.n_u != charted.n_u:
            raise ContractViolation("The cost does not match the model", n_x=charted.n_x, n_u=charted.n_u)

        bounded = charted.model
        if input_bounds is not None:
            if len(input_bounds) != charted.n_u or any(not low < high for low, high in input_bounds):
                raise InvalidParameter("Input bounds must be non-empty intervals, one per input", bounds=input_bounds)

            bounded = bounded.with_input_bounds(input_bounds)

        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (charted.n_x,):
            raise ContractViolation("Wrong initial state dimension", expected=charted.n_x, got=z0.shape)

        self.charted = charted
        self.cost = cost
        self.dt = float(dt)
        self.horizon = int(horizon)
        self.substeps = int(substeps)
        self.z0 = z0
        self.input_bounds = bounded.input_bounds
        self.lower = np.tile(bounded.lower_bounds, (self.horizon, 1))
        self.upper = np.tile(bounded.upper_bounds, (self.horizon, 1))
        self._transcription = _transcription or _Transcription(charted, cost, self.dt, self.horizon, self.substeps)

    @property
    def n_x(self):
        return self.charted.n_x

    @property
    def n_u(self):
        return self.charted.n_u

    @property
    def shape(self):
        return self.horizon, self.n_u

    def with_initial_state(self, z0):
        """Returns the same problem from another initial state, reusing the compiled functions."""

        return OcpProblem(
            self.charted,
            self.cost,
            self.dt,
            self.horizon,
            z0,
            self.input_bounds,
            self.substeps,
            _transcription=self._transcription,
        )

    def project(self, inputs):
        return np.clip(inputs, self.lower, self.upper)

    def check_inputs(self, inputs):
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != self.shape:
            raise ContractViolation("Wrong input sequence shape", expected=self.shape, got=inputs.shape)

        return inputs

    def states(self, inputs):
        return np.asarray(self._transcription.rollout(self.z0, inputs))

    def value(self, inputs):
        return float(self._transcription.objective(self.z0, inputs))

    def value_and_grad(self, inputs):
        value, grad = self._transcription.value_and_grad(self.z0, inputs)
        return float(value), np.asarray(grad)

    def hessian(self, inputs):
        """The exact Hessian of the objective, as an ``(H * n_u) x (H * n_u)`` matrix."""

        size = self.horizon * self.n_u
        return np.asarray(self._transcription.hessian(self.z0, inputs)).reshape(size, size)

    def residual(self, inputs, grad):
        """Norm of the projected gradient ``U - P(U - g)``."""

        return float(np.linalg.norm(inputs - self.project(inputs - grad)))


def rollout(problem, inputs):
    """
    Integrates the dynamics in privileged coordinates under piecewise-constant inputs (RK4, ``substeps`` per interval).

    Args:
        problem (:obj:`OcpProblem`): the problem (model, chart, ``dt`` and initial state).
        inputs (:obj:`array`): ``H x n_u`` inputs.

    Returns:
        :obj:`numpy.ndarray`: ``(H + 1) x n_x`` predicted states, starting at ``z0``.

    Raises:
        :obj:`RolloutDivergence`: If a predicted state is not finite.
    """

    inputs = problem.check_inputs(inputs)
    if not np.all(np.isfinite(inputs)):
        raise ContractViolation("Inputs must be finite")

    states = problem.states(inputs)
    finite = np.all(np.isfinite(states), axis=1)
    if not np.all(finite):
        raise RolloutDivergence("The rollout diverged", first_step=int(np.argmin(finite)))

    return states


def objective(problem, inputs):
    """Evaluates ``dt * sum_k l(z_k, u_k)`` for an input sequence (bounds are not enforced)."""

    return problem.value(problem.check_inputs(inputs))


def gradient(problem, inputs):
    """Gradient of the objective with respect to the inputs, as an ``H x n_u`` array."""

    return problem.value_and_grad(problem.check_inputs(inputs))[1]


def shift_warm_start(previous):
    """
    Builds the next guess from a solution: drops the first input block and duplicates the last one.

    Args:
        previous (:obj:`OcpSolution` or :obj:`array`): the previous solution (or its inputs).

    Returns:
        :obj:`numpy.ndarray`: The shifted ``H x n_u`` inputs.
    """

    inputs = np.asarray(previous.inputs if isinstance(previous, OcpSolution) else previous, dtype=float)
    return np.concatenate([inputs[1:], inputs[-1:]])


class _Dilated:
    """
    A view of a problem in dilated inputs ``v_j = u_j / rho^{s_j}`` with the objective divided by ``rho^degree``.

    ``rho`` is the homogeneous norm ``max_i |z0_i|^{1 / r_i}`` of the initial state. Under a tailored cost the dilated
    problem keeps the same size whatever the distance to the origin, so step lengths and the termination test keep
    their meaning along a closed loop. Quadratic costs are left as they are (``rho = 1``).
    """

    def __init__(self, problem):
        self.problem = problem
        self.shape = problem.shape

        cost = problem.cost
        rho, input_powers, degree = 1.0, np.zeros(problem.n_u), 0
        if cost.kind == TAILORED and np.any(problem.z0 != 0.0):
            weights = np.asarray(cost.chart.weights, dtype=float)
            rho = max(float(np.max(np.abs(problem.z0) ** (1.0 / weights))), DILATION_FLOOR)
            degree = cost.homogeneity_degree
            input_powers = degree / np.asarray(cost.input_exponents, dtype=float)

        self.rho = rho
        self.input_scale = np.tile(rho**input_powers, (problem.horizon, 1))
        self.objective_scale = rho**degree
        self.lower = problem.lower / self.input_scale
        self.upper = problem.upper / self.input_scale

    def to_inputs(self, v):
        return self.problem.project(v * self.input_scale)

    def from_inputs(self, u):
        return np.asarray(u, dtype=float) / self.input_scale

    def project(self, v):
        return np.clip(v, self.lower, self.upper)

    def residual(self, v, grad):
        return float(np.linalg.norm(v - self.project(v - grad)))

    def value(self, v):
        return self.problem.value(v * self.input_scale) / self.objective_scale

    def value_and_grad(self, v):
        f, g = self.problem.value_and_grad(v * self.input_scale)
        return f / self.objective_scale, g * self.input_scale / self.objective_scale

    def hessian(self, v):
        scale = self.input_scale.ravel()
        return self.problem.hessian(v * self.input_scale) * np.outer(scale, scale) / self.objective_scale

    def converged(self, v, f, grad, settings):
        return self.residual(v, grad) < settings.tolerance * (1.0 + abs(f))


def _projected_gradient(problem, inputs, settings, budget):
    """
    Non-monotone projected-gradient descent with Armijo backtracking and spectral step lengths.

    Returns:
        :obj:`tuple`: ``(inputs, objective, gradient, iterations)`` for the best iterate found.
    """

    f, g = problem.value_and_grad(inputs)
    if not np.isfinite(f):
        return inputs, f, g, 0

    history = deque([f], maxlen=settings.window)
    best = (inputs, f, g)
    step = 1.0

    iterations = 0
    while iterations < budget:
        if problem.converged(inputs, f, g, settings):
            break

        iterations += 1
        reference = max(history)
        alpha = step
        candidate, f_new = None, None
        while alpha > MIN_STEP:
            trial = problem.project(inputs - alpha * g)
            f_trial = problem.value(trial)
            if np.isfinite(f_trial) and f_trial <= reference - ARMIJO_SLOPE * float(np.vdot(g, inputs - trial)):
                candidate, f_new = trial, f_trial
                break

            alpha *= 0.5

        if candidate is None:
            break

        _, g_new = problem.value_and_grad(candidate)
        s, y = (candidate - inputs).ravel(), (g_new - g).ravel()
        sy = float(s @ y)
        step = min(max(float(s @ s) / sy, MIN_STEP), MAX_STEP) if sy > 0 else MAX_STEP

        inputs, f, g = candidate, f_new, g_new
        history.append(f)
        if f < best[1]:
            best = (inputs, f, g)

    return best + (iterations,)


def _refine(problem, inputs, settings, budget):
    """Box-constrained L-BFGS-B refinement. Returns ``(inputs, iterations)``."""

    shape = problem.shape

    def fun(flat):
        f, g = problem.value_and_grad(flat.reshape(shape))
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return np.finfo(float).max, np.zeros(flat.size)

        return f, g.ravel()

    bounds = list(zip(problem.lower.ravel(), problem.upper.ravel()))
    result = minimize(
        fun,
        inputs.ravel(),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": budget, "gtol": settings.tolerance, "ftol": 1e-15, "maxcor": 20, "maxls": 40},
    )

    return problem.project(result.x.reshape(shape)), int(result.nit)


def _newton_direction(problem, inputs, g, residual):
    # Variables at a bound with the gradient pushing outwards only take the (projected) gradient step
    x, grad = inputs.ravel(), g.ravel()
    margin = min(residual, 1e-3)
    lower, upper = problem.lower.ravel(), problem.upper.ravel()
    active = ((x - lower <= margin) & (grad > 0)) | ((upper - x <= margin) & (grad < 0))
    free = ~active

    direction = -grad.copy()
    if np.any(free):
        hessian = problem.hessian(inputs)[np.ix_(free, free)]
        eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (hessian + hessian.T))
        magnitudes = np.abs(eigenvalues)
        magnitudes = np.maximum(magnitudes, NEWTON_EIGENVALUE_FLOOR * max(1.0, float(magnitudes.max())))
        direction[free] = -eigenvectors @ ((eigenvectors.T @ grad[free]) / magnitudes)

    return direction.reshape(inputs.shape)


def _newton(problem, inputs, settings, budget):
    """
    Projected Newton iterations on the exact Hessian, with the eigenvalues of the free block replaced by their absolute
    values (floored). A step is accepted on sufficient decrease, or when the objective stays within the round-off band
    and the projected gradient shrinks.

    Returns:
        :obj:`tuple`: ``(inputs, objective, gradient, iterations)``.
    """

    f, g = problem.value_and_grad(inputs)
    iterations = 0
    while iterations < budget and np.isfinite(f):
        residual = problem.residual(inputs, g)
        if residual < settings.tolerance * (1.0 + abs(f)):
            break

        iterations += 1
        direction = _newton_direction(problem, inputs, g, residual)

        accepted = None
        alpha = 1.0
        while alpha > MIN_STEP:
            trial = problem.project(inputs + alpha * direction)
            f_trial, g_trial = problem.value_and_grad(trial)
            if np.isfinite(f_trial):
                slope = min(0.0, float(np.vdot(g, trial - inputs)))
                if f_trial <= f + ARMIJO_SLOPE * slope or (
                    f_trial <= f + ROUNDOFF_BAND * (1.0 + abs(f)) and problem.residual(trial, g_trial) < residual
                ):
                    accepted = (trial, f_trial, g_trial)
                    break

            alpha *= 0.5

        if accepted is None:
            break

        inputs, f, g = accepted

    return inputs, f, g, iterations


def _solve_from(problem, inputs, settings):
    """
    Runs the solver phases from one start: projected gradient, L-BFGS-B, then a Newton polish. Each phase only runs if
    the previous one did not converge.

    Returns:
        :obj:`tuple`: ``(inputs, objective, gradient, iterations)``, never worse than the start.
    """

    f_start, g_start = problem.value_and_grad(inputs)
    start = (inputs, f_start, g_start)

    polish_budget = min(NEWTON_MAX_ITER, settings.max_iter // 10)
    pg_budget = max(1, (settings.max_iter - polish_budget) // 2)
    inputs, f, g, iterations = _projected_gradient(problem, inputs, settings, pg_budget)

    refine_budget = settings.max_iter - polish_budget - iterations
    if not problem.converged(inputs, f, g, settings) and refine_budget > 0:
        refined, extra = _refine(problem, inputs, settings, refine_budget)
        iterations += extra
        f_refined, g_refined = problem.value_and_grad(refined)
        if np.isfinite(f_refined) and f_refined <= f:
            inputs, f, g = refined, f_refined, g_refined

    newton_budget = min(NEWTON_MAX_ITER, settings.max_iter - iterations)
    if not problem.converged(inputs, f, g, settings) and newton_budget > 0 and np.isfinite(f):
        polished, f_polished, g_polished, extra = _newton(problem, inputs, settings, newton_budget)
        iterations += extra
        if np.isfinite(f_polished) and f_polished <= f + ROUNDOFF_BAND * (1.0 + abs(f)):
            inputs, f, g = polished, f_polished, g_polished

    if np.isfinite(f_start) and not f <= f_start:
        inputs, f, g = start

    return inputs, f, g, iterations


def solve(problem, guess=None, settings=None, rng=None):
    """
    Solves the OCP: projected-gradient descent with a non-monotone Armijo line search, an L-BFGS-B refinement and a
    projected Newton polish on the exact Hessian. The returned objective is never worse than the objective of the
    (projected) guess.

    Tailored problems are solved in dilated inputs, normalized by the homogeneous norm of ``z0``; the termination test
    ``||P(v - g) - v|| < tolerance * (1 + |f|)`` and the reported residual refer to that dilated problem.

    When no guess is given the solve starts from zero inputs. If the cost is tailored, ``z0 != 0`` and the zero input is
    stationary, ``settings.restarts`` random starts (uniform within the bounds) are also tried and the best one wins.

    Args:
        problem (:obj:`OcpProblem`): the problem.
        guess (:obj:`OcpSolution` or :obj:`array`): an optional initial input sequence.
        settings (:obj:`SolverSettings`): the solver settings. Defaults to :obj:`SolverSettings()`.
        rng (:obj:`numpy.random.Generator`): source of the random restarts. Defaults to one seeded with
            ``settings.seed``.

    Returns:
        :obj:`OcpSolution`: The solution. ``max_iter`` is reported through ``status``, not raised.

    Raises:
        :obj:`ContractViolation`: If the guess does not match the problem dimensions.
    """

    settings = settings or SolverSettings()
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    dilated = _Dilated(problem)

    zero = np.zeros(problem.shape)
    infeasible = False
    if guess is not None:
        start = problem.project(problem.check_inputs(guess.inputs if isinstance(guess, OcpSolution) else guess))
        if not np.isfinite(problem.value(start)):
            logger.warning("The initial guess diverges, starting from zero inputs")
            start, infeasible = zero, True

    else:
        start = zero

    starts = [start]
    if guess is None and problem.cost.kind == TAILORED and np.any(problem.z0 != 0.0) and settings.restarts:
        f0, g0 = dilated.value_and_grad(zero)
        if dilated.converged(zero, f0, g0, settings):
            logger.info("Zero input is stationary, trying random restarts", restarts=settings.restarts)
            starts += [rng.uniform(problem.lower, problem.upper) for _ in range(settings.restarts)]

    best, iterations = None, 0
    for inputs in starts:
        v, f, g, spent = _solve_from(dilated, dilated.from_inputs(inputs), settings)
        iterations += spent
        if np.isfinite(f) and (best is None or f < best[1]):
            best = (v, f, g)

    v, f, g = best
    residual = dilated.residual(v, g)
    if infeasible:
        status = INFEASIBLE_GUESS

    elif residual < settings.tolerance * (1.0 + abs(f)):
        status = CONVERGED

    else:
        status = MAX_ITER

    inputs = dilated.to_inputs(v)
    value = problem.value(inputs)
    logger.debug(
        "OCP solved", objective=value, iterations=iterations, residual=residual, status=status, rho=dilated.rho
    )

    return OcpSolution(
        inputs=inputs,
        states=problem.states(inputs),
        objective=value,
        iterations=iterations,
        residual=residual,
        status=status,
        restarts=len(starts) - 1,
    )
