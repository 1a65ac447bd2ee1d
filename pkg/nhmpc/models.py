"""
Catalog of driftless kinematic vehicle models ``x' = G(x) u``.

Every vector field is written against an array namespace ``xp`` (``numpy`` by default, ``jax.numpy`` when the Lie
algebra engine or the OCP need derivatives of it), so a single definition serves both the plant simulation and the
automatic differentiation. The hand-coded Jacobians are plain numpy.

States are ordered as follows (angles unwrapped, in radians):
    - unicycle: ``(x, y, theta)``
    - kinematic_car: ``(x, y, theta, phi)``
    - one_trailer: ``(x, y, theta, theta_1)``
    - two_trailer: ``(x, y, theta, theta_1, theta_2)``
"""

import numpy as np
from functools import partial
from types import MappingProxyType

from common.constants import FD_RELATIVE_STEP
from common.exceptions import InvalidParameter, ContractViolation

from nhmpc.logger import get_logger

logger = get_logger(component="Models")


class VehicleModel:
    """
    A driftless control-affine system ``x' = sum_i X_i(x) u_i``.

    Args:
        name (:obj:`str`): the model identifier.
        n_x (:obj:`int`): the state dimension.
        n_u (:obj:`int`): the input dimension.
        fields (:obj:`list`): ``n_u`` callables ``X_i(x, xp)`` returning arrays of length ``n_x``.
        jacobians (:obj:`list`): ``n_u`` callables ``J_i(x)`` returning ``n_x x n_x`` numpy arrays. Optional if
            ``fd_jacobians`` is set.
        params (:obj:`dict`): named geometric constants (lengths in meters).
        input_bounds (:obj:`list`): ``n_u`` closed intervals ``(low, high)``. Defaults to ``[-1, 1]`` per input.
        fd_jacobians (:obj:`bool`): whether to fall back to central finite-difference Jacobians when ``jacobians``
            is not given.
        underactuated (:obj:`bool`): whether to enforce ``n_u < n_x``.

    Attributes:
        name (:obj:`str`): The model identifier.
        n_x (:obj:`int`): The state dimension.
        n_u (:obj:`int`): The input dimension.
        fields (:obj:`tuple`): The input vector fields.
        jacobians (:obj:`tuple`): The Jacobians of the input vector fields.
        params (:obj:`MappingProxyType`): Read-only view of the geometric constants.
        input_bounds (:obj:`tuple`): The input intervals, as ``(low, high)`` pairs.

    Raises:
        :obj:`InvalidParameter`: If the dimensions, the bounds or the Jacobian setup are inconsistent.
    """

    def __init__(
        self,
        name,
        n_x,
        n_u,
        fields,
        jacobians=None,
        params=None,
        input_bounds=None,
        fd_jacobians=False,
        underactuated=True,
    ):
        if n_x < 1 or n_u < 1:
            raise InvalidParameter("Dimensions must be positive", n_x=n_x, n_u=n_u)

        if underactuated and n_u >= n_x:
            raise InvalidParameter("A non-holonomic model must be underactuated", n_x=n_x, n_u=n_u)

        if len(fields) != n_u:
            raise InvalidParameter("One vector field per input is required", n_u=n_u, fields=len(fields))

        if jacobians is None:
            if not fd_jacobians:
                raise InvalidParameter("Jacobians must be given unless finite-difference Jacobians are enabled")

            jacobians = [partial(fd_jacobian, f) for f in fields]

        elif len(jacobians) != n_u:
            raise InvalidParameter("One Jacobian per input is required", n_u=n_u, jacobians=len(jacobians))

        if input_bounds is None:
            input_bounds = [(-1.0, 1.0)] * n_u

        if len(input_bounds) != n_u:
            raise InvalidParameter("One interval per input is required", n_u=n_u, bounds=len(input_bounds))

        for low, high in input_bounds:
            if not low <= 0.0 <= high or low == high:
                raise InvalidParameter("Input intervals must be non-empty and contain 0", low=low, high=high)

        self.name = name
        self.n_x = n_x
        self.n_u = n_u
        self.fields = tuple(fields)
        self.jacobians = tuple(jacobians)
        self.params = MappingProxyType(dict(params or {}))
        self.input_bounds = tuple((float(low), float(high)) for low, high in input_bounds)

    def __repr__(self):
        params = ", ".join("{}={}".format(k, v) for k, v in self.params.items())
        return "VehicleModel({}{})".format(self.name, ", " + params if params else "")

    @property
    def lower_bounds(self):
        return np.array([low for low, _ in self.input_bounds])

    @property
    def upper_bounds(self):
        return np.array([high for _, high in self.input_bounds])

    def with_input_bounds(self, input_bounds):
        """Returns a copy of the model with different input intervals."""

        return VehicleModel(
            self.name,
            self.n_x,
            self.n_u,
            self.fields,
            self.jacobians,
            self.params,
            input_bounds,
            underactuated=self.n_u < self.n_x,
        )

    def check_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_x,):
            raise ContractViolation("Wrong state dimension", expected=self.n_x, got=x.shape)

        return x

    def check_input(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_u,):
            raise ContractViolation("Wrong input dimension", expected=self.n_u, got=u.shape)

        return u

    def field(self, i, x, xp=np):
        """Evaluates the ``i``-th (0-based) input vector field at ``x``."""

        return self.fields[i](x, xp)

    def jacobian(self, i, x):
        """Evaluates the Jacobian of the ``i``-th (0-based) input vector field at ``x``."""

        return self.jacobians[i](self.check_state(x))

    def input_matrix(self, x, xp=np):
        """Evaluates ``G(x)``, whose columns are the input vector fields."""

        return xp.stack([f(x, xp) for f in self.fields], axis=1)

    def dynamics(self, x, u, xp=np):
        """Evaluates ``G(x) u`` without checking the dimensions (used inside the integrators)."""

        return self.input_matrix(x, xp) @ u


def dynamics(model, x, u):
    """
    Evaluates the vector field of a driftless model.

    Args:
        model (:obj:`VehicleModel`): the model.
        x (:obj:`array`): the state, of length ``n_x``.
        u (:obj:`array`): the input, of length ``n_u``. Bounds are not enforced.

    Returns:
        :obj:`numpy.ndarray`: ``sum_i X_i(x) u_i``.

    Raises:
        :obj:`ContractViolation`: If the dimensions do not match the model.
    """

    return model.dynamics(model.check_state(x), model.check_input(u))


def fd_jacobian(field, x):
    """
    Central finite-difference Jacobian of a vector field, with step ``1e-6 * (1 + |x_i|)`` along each coordinate.

    Args:
        field (:obj:`callable`): a vector field ``X(x, xp)``.
        x (:obj:`array`): the evaluation point.

    Returns:
        :obj:`numpy.ndarray`: The ``n x n`` Jacobian estimate.
    """

    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        h = FD_RELATIVE_STEP * (1.0 + abs(x[i]))
        step = np.zeros_like(x)
        step[i] = h
        columns.append((np.asarray(field(x + step, np)) - np.asarray(field(x - step, np))) / (2 * h))

    return np.stack(columns, axis=1)


def _check_lengths(**lengths):
    for name, value in lengths.items():
        if not value > 0:
            raise InvalidParameter("Lengths must be positive", **{name: value})


# Unicycle
def _unicycle_drive(x, xp=np):
    return xp.stack([xp.cos(x[2]), xp.sin(x[2]), 0.0 * x[2]])


def _unicycle_drive_jacobian(x):
    jac = np.zeros((3, 3))
    jac[0, 2] = -np.sin(x[2])
    jac[1, 2] = np.cos(x[2])
    return jac


def _unit_field(n, k, x, xp=np):
    return xp.stack([0.0 * x[0] + (1.0 if i == k else 0.0) for i in range(n)])


def _zero_jacobian(n, x):
    return np.zeros((n, n))


def make_unicycle(input_bounds=None):
    """Unicycle (differential drive): inputs are the forward velocity and the yaw rate."""

    return VehicleModel(
        "unicycle",
        3,
        2,
        [_unicycle_drive, partial(_unit_field, 3, 2)],
        [_unicycle_drive_jacobian, partial(_zero_jacobian, 3)],
        input_bounds=input_bounds,
    )


# Front-wheel-driven kinematic car
def _car_drive(l, x, xp=np):
    theta, phi = x[2], x[3]
    return xp.stack([xp.cos(theta) * xp.cos(phi), xp.sin(theta) * xp.cos(phi), xp.sin(phi) / l, 0.0 * phi])


def _car_drive_jacobian(l, x):
    theta, phi = x[2], x[3]
    jac = np.zeros((4, 4))
    jac[0, 2] = -np.sin(theta) * np.cos(phi)
    jac[1, 2] = np.cos(theta) * np.cos(phi)
    jac[0, 3] = -np.cos(theta) * np.sin(phi)
    jac[1, 3] = -np.sin(theta) * np.sin(phi)
    jac[2, 3] = np.cos(phi) / l
    return jac


def make_kinematic_car(l, input_bounds=None):
    """
    Front-wheel-driven kinematic car with axle distance ``l``: inputs are the front wheel velocity and the steering
    rate.

    Raises:
        :obj:`InvalidParameter`: If ``l`` is not positive.
    """

    _check_lengths(l=l)
    return VehicleModel(
        "kinematic_car",
        4,
        2,
        [partial(_car_drive, l), partial(_unit_field, 4, 3)],
        [partial(_car_drive_jacobian, l), partial(_zero_jacobian, 4)],
        params={"l": l},
        input_bounds=input_bounds,
    )


# Unicycle with one on-axle hitched trailer
def _one_trailer_drive(l1, x, xp=np):
    theta, theta_1 = x[2], x[3]
    return xp.stack([xp.cos(theta), xp.sin(theta), 0.0 * theta, xp.sin(theta - theta_1) / l1])


def _one_trailer_drive_jacobian(l1, x):
    theta, theta_1 = x[2], x[3]
    jac = np.zeros((4, 4))
    jac[0, 2] = -np.sin(theta)
    jac[1, 2] = np.cos(theta)
    jac[3, 2] = np.cos(theta - theta_1) / l1
    jac[3, 3] = -np.cos(theta - theta_1) / l1
    return jac


def make_one_trailer(l1, input_bounds=None):
    """
    Unicycle towing one trailer hitched on its axle at distance ``l1``.

    Raises:
        :obj:`InvalidParameter`: If ``l1`` is not positive.
    """

    _check_lengths(l1=l1)
    return VehicleModel(
        "one_trailer",
        4,
        2,
        [partial(_one_trailer_drive, l1), partial(_unit_field, 4, 2)],
        [partial(_one_trailer_drive_jacobian, l1), partial(_zero_jacobian, 4)],
        params={"l1": l1},
        input_bounds=input_bounds,
    )


# Unicycle with two on-axle hitched trailers
def _two_trailer_drive(l1, l2, x, xp=np):
    theta, theta_1, theta_2 = x[2], x[3], x[4]
    return xp.stack(
        [
            xp.cos(theta),
            xp.sin(theta),
            0.0 * theta,
            xp.sin(theta - theta_1) / l1,
            xp.cos(theta - theta_1) * xp.sin(theta_1 - theta_2) / l2,
        ]
    )


def _two_trailer_drive_jacobian(l1, l2, x):
    theta, theta_1, theta_2 = x[2], x[3], x[4]
    a = theta - theta_1
    b = theta_1 - theta_2
    jac = np.zeros((5, 5))
    jac[0, 2] = -np.sin(theta)
    jac[1, 2] = np.cos(theta)
    jac[3, 2] = np.cos(a) / l1
    jac[3, 3] = -np.cos(a) / l1
    jac[4, 2] = -np.sin(a) * np.sin(b) / l2
    jac[4, 3] = (np.sin(a) * np.sin(b) + np.cos(a) * np.cos(b)) / l2
    jac[4, 4] = -np.cos(a) * np.cos(b) / l2
    return jac


def make_two_trailer(l1, l2, input_bounds=None):
    """
    Unicycle towing two trailers hitched on their axles at distances ``l1`` and ``l2``.

    Raises:
        :obj:`InvalidParameter`: If ``l1`` or ``l2`` is not positive.
    """

    _check_lengths(l1=l1, l2=l2)
    return VehicleModel(
        "two_trailer",
        5,
        2,
        [partial(_two_trailer_drive, l1, l2), partial(_unit_field, 5, 2)],
        [partial(_two_trailer_drive_jacobian, l1, l2), partial(_zero_jacobian, 5)],
        params={"l1": l1, "l2": l2},
        input_bounds=input_bounds,
    )


MODEL_BUILDERS = {
    "unicycle": lambda params, bounds: make_unicycle(bounds),
    "kinematic_car": lambda params, bounds: make_kinematic_car(params["l"], bounds),
    "one_trailer": lambda params, bounds: make_one_trailer(params["l1"], bounds),
    "two_trailer": lambda params, bounds: make_two_trailer(params["l1"], params["l2"], bounds),
}


def register_model(name, builder):
    """
    Adds a user-defined model to the catalog, so it can be selected by name from a scenario file.

    Args:
        name (:obj:`str`): the model identifier.
        builder (:obj:`callable`): a function ``builder(params, input_bounds) -> VehicleModel``.

    Raises:
        :obj:`InvalidParameter`: If the name is already taken.
    """

    if name in MODEL_BUILDERS:
        raise InvalidParameter("A model with the same name is already registered", name=name)

    MODEL_BUILDERS[name] = builder
    logger.info("Vehicle model registered", name=name)


def make_model(name, params=None, input_bounds=None):
    """
    Builds a model from the catalog by name.

    Args:
        name (:obj:`str`): one of ``unicycle``, ``kinematic_car``, ``one_trailer``, ``two_trailer`` or a registered
            user model.
        params (:obj:`dict`): geometric constants (``l`` for the car, ``l1`` and ``l2`` for the trailers). Unused
            entries are ignored.
        input_bounds (:obj:`list`): optional input intervals.

    Returns:
        :obj:`VehicleModel`: The requested model.

    Raises:
        :obj:`InvalidParameter`: If the name is unknown or a required parameter is missing or invalid.
    """

    builder = MODEL_BUILDERS.get(name)
    if builder is None:
        raise InvalidParameter("Unknown vehicle model", name=name, known=sorted(MODEL_BUILDERS))

    try:
        model = builder(dict(params or {}), input_bounds)

    except KeyError as e:
        raise InvalidParameter("Missing vehicle parameter", name=name, param=e.args[0])

    logger.debug("Vehicle model built", model=repr(model), input_bounds=model.input_bounds)
    return model
