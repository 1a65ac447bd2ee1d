import numpy as np
from functools import reduce
from dataclasses import dataclass, replace

from common.exceptions import BasicException, InvalidParameter, ContractViolation
from common.tools import gcd_of

from nhmpc.logger import get_logger

logger = get_logger(component="Cost")

TAILORED = "tailored"
QUADRATIC = "quadratic"


class IndefiniteMatrix(BasicException):
    """Raised when a quadratic weight matrix is not symmetric positive definite."""


class ExponentError(BasicException):
    """Raised when the exponents of a tailored cost are not integers (or are below 1)."""


def _abs_power(value, exponent, xp):
    """``|value| ** exponent``, with a zero subgradient at 0. Even powers skip the absolute value."""

    if exponent % 2 == 0:
        return value**exponent

    # jax differentiates abs to 1 at 0
    return xp.where(value == 0, 0.0, xp.abs(value)) ** exponent


@dataclass(frozen=True)
class StageCost:
    """
    A stage cost ``l(x, u)``.

    Tailored costs are ``sigma * (sum_i q_i |z_i|^{e_i} + sum_j r_j |u_j|^{f_j})`` evaluated in the privileged
    coordinates ``z`` of ``chart``. Quadratic costs are ``(x - d)^T Q (x - d) + u^T R u``.

    Attributes:
        kind (:obj:`str`): ``tailored`` or ``quadratic``.
        state_exponents (:obj:`tuple`): ``e_i`` (tailored).
        state_weights (:obj:`tuple`): ``q_i`` (tailored).
        input_exponents (:obj:`tuple`): ``f_j`` (tailored).
        input_weights (:obj:`tuple`): ``r_j`` (tailored).
        scale (:obj:`float`): ``sigma`` (tailored).
        homogeneity_degree (:obj:`int`): the degree of the cost under the dilation (tailored).
        chart (:obj:`PrivilegedChart <nhmpc.privcoord.PrivilegedChart>`): the chart of a tailored cost.
        Q (:obj:`numpy.ndarray`): state weight matrix (quadratic).
        R (:obj:`numpy.ndarray`): input weight matrix (quadratic).
        d (:obj:`numpy.ndarray`): setpoint (quadratic).
    """

    kind: str
    state_exponents: tuple = ()
    state_weights: tuple = ()
    input_exponents: tuple = ()
    input_weights: tuple = ()
    scale: float = 1.0
    homogeneity_degree: int = 0
    chart: object = None
    Q: np.ndarray = None
    R: np.ndarray = None
    d: np.ndarray = None

    @property
    def n_x(self):
        return len(self.state_exponents) if self.kind == TAILORED else self.Q.shape[0]

    @property
    def n_u(self):
        return len(self.input_exponents) if self.kind == TAILORED else self.R.shape[0]

    @property
    def needs_state(self):
        """Whether the cost is evaluated on original coordinates (rather than on the chart coordinates)."""
        return self.kind == QUADRATIC

    def tailored_terms(self, z, u, xp=np):
        value = 0.0
        for i, e in enumerate(self.state_exponents):
            value = value + self.state_weights[i] * _abs_power(z[i], e, xp)

        for j, f in enumerate(self.input_exponents):
            value = value + self.input_weights[j] * _abs_power(u[j], f, xp)

        return value

    def evaluate(self, x, u, z=None, xp=np):
        """
        Evaluates the cost at the state ``x`` (original coordinates) and input ``u``.

        Args:
            x (:obj:`array`): the state. May be None for tailored costs when ``z`` is given.
            u (:obj:`array`): the input.
            z (:obj:`array`): the privileged coordinates of ``x``, if already known.
            xp (:obj:`module`): the array namespace (``numpy`` or ``jax.numpy``).

        Returns:
            The (non-negative) cost.
        """

        if self.kind == TAILORED:
            if z is None:
                z = self.chart.forward(x, xp)

            return self.scale * self.tailored_terms(z, u, xp)

        e = x - xp.asarray(self.d)
        return e @ xp.asarray(self.Q) @ e + u @ xp.asarray(self.R) @ u

    def with_scale(self, scale):
        if not scale > 0:
            raise InvalidParameter("The cost scale must be positive", scale=scale)

        return replace(self, scale=float(scale))


def _check_weights(weights, size, name, allow_zero):
    weights = tuple(float(w) for w in weights)
    if len(weights) != size:
        raise ContractViolation("Wrong number of weights", weights=name, expected=size, got=len(weights))

    if allow_zero:
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise InvalidParameter("Weights must be non-negative and not all zero", weights=name)

    elif any(not w > 0 for w in weights):
        raise InvalidParameter("Weights must be positive", weights=name)

    return weights


def tailored_exponents(r, s, cancel_gcd=False):
    """
    Computes the exponents of the tailored cost: ``e_i = d / r_i`` and ``f_j = d / s_j`` with ``d = 2 * prod(r)``,
    optionally divided by their greatest common divisor.

    Args:
        r (:obj:`tuple`): the dilation exponents (weights) of the state.
        s (:obj:`tuple`): the dilation exponents of the inputs.
        cancel_gcd (:obj:`bool`): whether to divide all exponents by their GCD.

    Returns:
        :obj:`tuple`: ``(state_exponents, input_exponents, degree)`` where ``degree`` is the homogeneity degree.

    Raises:
        :obj:`ExponentError`: If an exponent is not an integer or is below 1.
    """

    degree = 2 * reduce(lambda a, b: a * b, r, 1)

    exponents = []
    for w in tuple(r) + tuple(s):
        if w != int(w) or w < 1 or degree % int(w):
            raise ExponentError("Dilation exponents must be positive integers dividing the cost degree", weight=w)

        exponents.append(degree // int(w))

    if cancel_gcd:
        common = gcd_of(exponents)
        exponents = [e // common for e in exponents]
        degree //= common

    if min(exponents) < 1:
        raise ExponentError("Exponents must be at least 1", exponents=exponents)

    return tuple(exponents[: len(r)]), tuple(exponents[len(r) :]), degree


def build_tailored(chart, q=None, r_w=None, cancel_gcd=False, scale=1.0, s=(1, 1)):
    """
    Builds the tailored homogeneous stage cost of a privileged chart.

    Args:
        chart (:obj:`PrivilegedChart <nhmpc.privcoord.PrivilegedChart>`): the chart (provides the state weights).
        q (:obj:`tuple`): non-negative state weights (not all zero). Defaults to ones.
        r_w (:obj:`tuple`): positive input weights. Defaults to ones.
        cancel_gcd (:obj:`bool`): whether to divide all exponents by their GCD.
        scale (:obj:`float`): the global scale ``sigma``.
        s (:obj:`tuple`): the dilation exponents of the inputs.

    Returns:
        :obj:`StageCost`: The tailored cost.

    Raises:
        :obj:`InvalidParameter`: If the weights or the scale are invalid.
        :obj:`ExponentError`: If an exponent is not an integer.
    """

    n_x, n_u = len(chart.weights), len(s)
    q = _check_weights(q if q else (1.0,) * n_x, n_x, "state", allow_zero=True)
    r_w = _check_weights(r_w if r_w else (1.0,) * n_u, n_u, "input", allow_zero=False)

    if not scale > 0:
        raise InvalidParameter("The cost scale must be positive", scale=scale)

    state_exponents, input_exponents, degree = tailored_exponents(chart.weights, s, cancel_gcd)
    logger.debug("Tailored cost built", state_exponents=state_exponents, input_exponents=input_exponents)

    return StageCost(
        kind=TAILORED,
        state_exponents=state_exponents,
        state_weights=q,
        input_exponents=input_exponents,
        input_weights=r_w,
        scale=float(scale),
        homogeneity_degree=degree,
        chart=chart,
    )


def build_quadratic(Q, R, d=None):
    """
    Builds the quadratic stage cost ``(x - d)^T Q (x - d) + u^T R u``.

    Args:
        Q (:obj:`array`): symmetric positive definite state weight matrix.
        R (:obj:`array`): symmetric positive definite input weight matrix.
        d (:obj:`array`): the setpoint. Defaults to the origin.

    Returns:
        :obj:`StageCost`: The quadratic cost.

    Raises:
        :obj:`IndefiniteMatrix`: If ``Q`` or ``R`` is not symmetric positive definite.
    """

    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))

    for name, matrix in (("Q", Q), ("R", R)):
        if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
            raise IndefiniteMatrix("Weight matrices must be symmetric", matrix=name)

        try:
            np.linalg.cholesky(matrix)
        except np.linalg.LinAlgError:
            raise IndefiniteMatrix("Weight matrices must be positive definite", matrix=name)

    d = np.zeros(Q.shape[0]) if d is None else np.asarray(d, dtype=float)
    return StageCost(kind=QUADRATIC, Q=Q, R=R, d=d)


def evaluate(cost, x, u):
    """
    Evaluates a stage cost at ``(x, u)`` in original coordinates (tailored costs go through their chart).

    Raises:
        :obj:`ContractViolation`: If the dimensions do not match the cost.
    """

    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (cost.n_x,) or u.shape != (cost.n_u,):
        raise ContractViolation("Wrong dimensions", n_x=cost.n_x, n_u=cost.n_u, x=x.shape, u=u.shape)

    return float(cost.evaluate(x, u))


def scale_to_initial(cost, x0):
    """
    Returns a tailored cost whose scale normalizes the cost at ``(x0, 0)`` to 1. The cost is returned unchanged if it is
    not tailored or if that value is zero.
    """

    if cost.kind != TAILORED:
        return cost

    raw = float(cost.tailored_terms(cost.chart.forward(np.asarray(x0, dtype=float)), np.zeros(cost.n_u)))
    if raw <= 0.0:
        return cost

    return cost.with_scale(1.0 / raw)
