"""
Privileged coordinates (both steps of Bellaiche's algorithm), the dynamics of a model expressed in those coordinates and
the numerical extraction of the homogeneous nilpotent approximation.

Polynomial corrections are stored as ``(coefficient, alpha)`` pairs standing for ``coefficient * prod(y_i^a_i / a_i!)``
(divided powers), while the fields of a :obj:`HomogeneousApprox` are stored over ordinary monomials
``coefficient * prod(z_i^e_i)``.
"""

import jax
import jax.numpy as jnp
import numpy as np
from math import factorial
from itertools import combinations_with_replacement
from dataclasses import dataclass, field

from common.exceptions import BasicException, ContractViolation
from common.constants import (
    SINGULAR_FRAME_CONDITION,
    RICHARDSON_EPSILONS,
    COEFFICIENT_ZERO,
    DIVERGENCE_RESIDUAL,
    HOMOGENEITY_SAMPLES,
)

from nhmpc.logger import get_logger
from nhmpc.liealg import classify_derivative, lie_derivative_fn, bracket_fn

logger = get_logger(component="PrivilegedChart")


class SingularFrame(BasicException):
    """Raised when the adapted frame is not invertible (condition number above 1e12)."""


class DivergentLimit(BasicException):
    """Raised when the dilation limit of a transformed field does not exist (wrong weights or non-privileged chart)."""


def _divided_power(y, alpha, xp):
    term = 1.0
    for i, a in enumerate(alpha):
        if a:
            term = term * y[i] ** a / factorial(a)

    return term


def _correction(terms, y, xp):
    value = 0.0
    for coeff, alpha in terms:
        value = value + coeff * _divided_power(y, alpha, xp)

    return value


def _check_frame(frame):
    if not np.all(np.isfinite(frame)) or np.linalg.cond(frame) > SINGULAR_FRAME_CONDITION:
        raise SingularFrame("The adapted frame is singular", condition=float(np.linalg.cond(frame)))


def _check_model(filtration, model):
    if model is not None and model.n_x != len(filtration.weights):
        raise ContractViolation("The filtration does not match the model", n_x=model.n_x, weights=filtration.weights)


@dataclass(frozen=True)
class PrivilegedChart:
    """
    A privileged-coordinate chart ``x -> y -> z`` centered at a setpoint.

    Attributes:
        d (:obj:`numpy.ndarray`): the setpoint.
        frame (:obj:`numpy.ndarray`): the adapted frame ``A`` (fields as columns).
        frame_inv (:obj:`numpy.ndarray`): ``A^{-1}``.
        weights (:obj:`tuple`): the weights of the coordinates.
        corrections (:obj:`tuple`): per coordinate, the tuple of ``(coefficient, alpha)`` step-2 terms (empty when
            ``z_j = y_j``).
    """

    d: np.ndarray
    frame: np.ndarray
    frame_inv: np.ndarray
    weights: tuple
    corrections: tuple

    @property
    def n(self):
        return len(self.weights)

    @property
    def is_linear(self):
        return not any(self.corrections)

    def step1(self, x, xp=np):
        """Linear adapted coordinates ``y = A^{-1} (x - d)``."""

        return xp.asarray(self.frame_inv) @ (x - xp.asarray(self.d))

    def z_of_y(self, y, xp=np):
        if self.is_linear:
            return y

        return xp.stack([y[j] - _correction(self.corrections[j], y, xp) for j in range(self.n)])

    def y_of_z(self, z, xp=np):
        if self.is_linear:
            return z

        # The corrections of z_j only involve y_1..y_{j-1}, so the inverse is solved coordinate by coordinate
        y = []
        for j in range(self.n):
            partial = y + [0.0 * z[j]] * (self.n - j)
            y.append(z[j] + _correction(self.corrections[j], partial, xp))

        return xp.stack(y)

    def forward(self, x, xp=np):
        """Maps original coordinates to privileged coordinates."""

        return self.z_of_y(self.step1(x, xp), xp)

    def inverse(self, z, xp=np):
        """Maps privileged coordinates back to original coordinates."""

        return xp.asarray(self.d) + xp.asarray(self.frame) @ self.y_of_z(z, xp)

    def jacobian(self, x):
        """``dz/dx`` at ``x``."""

        return np.asarray(jax.jacfwd(lambda v: self.forward(v, jnp))(jnp.asarray(x, dtype=jnp.float64)))

    def inverse_jacobian(self, z):
        """``dx/dz`` at ``z``."""

        return np.asarray(jax.jacfwd(lambda v: self.inverse(v, jnp))(jnp.asarray(z, dtype=jnp.float64)))

    def describe(self):
        """Returns the y-map and the step-2 terms as human-readable lines."""

        lines = []
        for j in range(self.n):
            terms = []
            for k in range(self.n):
                coeff = self.frame_inv[j, k]
                if abs(coeff) > COEFFICIENT_ZERO:
                    delta = "x{}".format(k + 1) if self.d[k] == 0.0 else "(x{} - {!r})".format(k + 1, float(self.d[k]))
                    terms.append("{!r}*{}".format(float(coeff), delta))

            lines.append("y{} = {}".format(j + 1, " + ".join(terms) if terms else "0"))

        for j in range(self.n):
            if self.corrections[j]:
                terms = [
                    "{!r}*{}".format(float(coeff), format_monomial(alpha, "y", divided=True))
                    for coeff, alpha in self.corrections[j]
                ]
                lines.append("z{} = y{} - ({})".format(j + 1, j + 1, " + ".join(terms)))

            else:
                lines.append("z{} = y{}".format(j + 1, j + 1))

        return lines


def step1_transform(filtration, x):
    """
    First step of Bellaiche's algorithm: linear adapted coordinates ``y`` solving ``A y = x - d``, with ``A`` the
    adapted frame at ``d`` (fields as columns).

    Args:
        filtration (:obj:`LieFiltration <nhmpc.liealg.LieFiltration>`): the filtration at ``d``.
        x (:obj:`array`): the state in original coordinates.

    Returns:
        :obj:`numpy.ndarray`: ``y``.

    Raises:
        :obj:`SingularFrame`: If the frame is not invertible.
    """

    _check_frame(filtration.frame)
    x = np.asarray(x, dtype=float)
    if x.shape != filtration.d.shape:
        raise ContractViolation("Wrong state dimension", expected=filtration.d.shape, got=x.shape)

    return np.linalg.solve(filtration.frame, x - filtration.d)


def _multi_indices(j, k, weights, max_weight):
    """Multi-indices over the coordinates ``0..j-1`` with ``|alpha| = k`` and weighted degree below ``max_weight``."""

    indices = []
    for combo in combinations_with_replacement(range(j), k):
        alpha = [0] * len(weights)
        for i in combo:
            alpha[i] += 1

        if sum(a * w for a, w in zip(alpha, weights)) < max_weight:
            indices.append(tuple(alpha))

    return indices


def step2_corrections(filtration, model=None):
    """
    Second step of Bellaiche's algorithm: the polynomial corrections ``h_{j,k}`` turning the linear adapted
    coordinates into privileged coordinates.

    For each ``j`` with ``w_j >= 3`` and ``k = 2..w_j-1``, the coefficient of ``y^alpha / alpha!`` in ``h_{j,k}``, for
    ``|alpha| = k`` and ``w(alpha) < w_j``, is the nested derivative
    ``Y_1^{alpha_1} ... Y_{j-1}^{alpha_{j-1}} (y_j - sum_{q<k} h_{j,q})`` at ``y = 0``, where ``Y_i`` are the
    adapted-frame fields written in ``y`` coordinates.

    Args:
        filtration (:obj:`LieFiltration <nhmpc.liealg.LieFiltration>`): the filtration at ``d``.
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model the filtration was built from. Optional, the
            frame fields come with the filtration.

    Returns:
        :obj:`tuple`: Per coordinate, a tuple of ``(coefficient, alpha)`` terms (empty if no correction).

    Raises:
        :obj:`AmbiguousOrder`: If a derivative falls in the tolerance dead-zone.
        :obj:`ContractViolation`: If the model and the filtration have different dimensions.
    """

    _check_model(filtration, model)
    _check_frame(filtration.frame)
    weights = filtration.weights
    n = len(weights)
    d = jnp.asarray(filtration.d)
    frame = jnp.asarray(filtration.frame)
    frame_inv = jnp.asarray(np.linalg.inv(filtration.frame))

    def frame_field_in_y(vf):
        return lambda y: frame_inv @ vf.fn(d + frame @ y)

    y_fields = [frame_field_in_y(vf) for vf in filtration.basis_fields]
    origin = jnp.zeros(n)

    corrections = []
    for j in range(n):
        terms = []
        for k in range(2, weights[j]):

            def residual(y, j=j, terms=tuple(terms)):
                return y[j] - _correction(terms, y, jnp)

            new_terms = []
            for alpha in _multi_indices(j, k, weights, weights[j]):
                derivative = residual
                for i in reversed(range(j)):
                    for _ in range(alpha[i]):
                        derivative = lie_derivative_fn(y_fields[i], derivative)

                value = float(derivative(origin))
                if classify_derivative(value):
                    new_terms.append((value, alpha))

            terms.extend(new_terms)

        corrections.append(tuple(terms))

    if any(corrections):
        logger.warning(
            "Non-trivial step-2 corrections (experimental)",
            d=filtration.d.tolist(),
            terms=sum(len(t) for t in corrections),
        )

    return tuple(corrections)


def build_chart(filtration, model=None):
    """
    Builds the privileged chart at the filtration point (both steps of Bellaiche's algorithm).

    Returns:
        :obj:`PrivilegedChart`: The chart.

    Raises:
        :obj:`SingularFrame`: If the frame is not invertible.
        :obj:`AmbiguousOrder`: If a step-2 derivative falls in the tolerance dead-zone.
        :obj:`ContractViolation`: If the model and the filtration have different dimensions.
    """

    corrections = step2_corrections(filtration, model)
    return PrivilegedChart(
        d=np.array(filtration.d, dtype=float),
        frame=np.array(filtration.frame, dtype=float),
        frame_inv=np.linalg.inv(filtration.frame),
        weights=tuple(filtration.weights),
        corrections=corrections,
    )


class ChartedModel:
    """
    The exact dynamics of a model written in privileged coordinates, ``z' = (dz/dx) G(x) u`` with ``x = chart^{-1}(z)``.

    Every method is jax-traceable.

    Args:
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model.
        chart (:obj:`PrivilegedChart`): the chart.
    """

    def __init__(self, model, chart):
        if model.n_x != chart.n:
            raise ContractViolation("The chart does not match the model", n_x=model.n_x, chart=chart.n)

        self.model = model
        self.chart = chart

    @property
    def n_x(self):
        return self.model.n_x

    @property
    def n_u(self):
        return self.model.n_u

    def _push(self, x, v):
        return jax.jvp(lambda s: self.chart.forward(s, jnp), (x,), (v,))[1]

    def field(self, i, z):
        x = self.chart.inverse(z, jnp)
        return self._push(x, self.model.field(i, x, jnp))

    def dynamics(self, z, u):
        x = self.chart.inverse(z, jnp)
        return self._push(x, self.model.dynamics(x, u, jnp))


def _weighted_monomials(weights, degree):
    """Exponent tuples ``e`` with ``sum(e_k * w_k) == degree``."""

    def extend(k, remaining):
        if k == len(weights):
            return [()] if remaining == 0 else []

        result = []
        for e in range(remaining // weights[k] + 1):
            result.extend((e,) + rest for rest in extend(k + 1, remaining - e * weights[k]))

        return result

    return extend(0, degree)


def _monomial(z, exponents, xp=np):
    value = 1.0
    for k, e in enumerate(exponents):
        if e:
            value = value * z[..., k] ** e

    return value


def format_monomial(exponents, var, divided=False):
    factors = []
    for k, e in enumerate(exponents):
        if e == 1:
            factors.append("{}{}".format(var, k + 1))
        elif e > 1:
            factors.append("{}{}^{}".format(var, k + 1, e) + ("/{}!".format(e) if divided else ""))

    return "*".join(factors) if factors else "1"


def format_polynomial(terms, var="z"):
    """Renders ``[(coefficient, exponents), ...]`` as text, e.g. ``-1.0*z2``."""

    if not terms:
        return "0"

    rendered = []
    for coeff, exponents in terms:
        monomial = format_monomial(exponents, var)
        rendered.append(repr(float(coeff)) if monomial == "1" else "{!r}*{}".format(float(coeff), monomial))

    return " + ".join(rendered)


@dataclass(frozen=True)
class HomogeneousApprox:
    """
    The homogeneous nilpotent approximation ``z' = sum_i Zhat_i(z) u_i`` of a model in privileged coordinates.

    Attributes:
        fields (:obj:`tuple`): per input, per state component, a tuple of ``(coefficient, exponents)`` over ordinary
            monomials in ``z``.
        r (:obj:`tuple`): the dilation exponents of the state (the weights).
        s (:obj:`tuple`): the dilation exponents of the inputs.
        tau (:obj:`int`): the degree of homogeneity.
    """

    fields: tuple
    r: tuple
    s: tuple
    tau: int = 0
    fit_residual: float = field(default=0.0, compare=False)

    @property
    def n_x(self):
        return len(self.r)

    @property
    def n_u(self):
        return len(self.s)

    def field(self, i, z, xp=np):
        """Evaluates ``Zhat_i`` at ``z`` (works on batches along the leading axes)."""

        components = []
        for terms in self.fields[i]:
            value = 0.0 * z[..., 0]
            for coeff, exponents in terms:
                value = value + coeff * _monomial(z, exponents, xp)

            components.append(value)

        return xp.stack(components, axis=-1)

    def input_matrix(self, z, xp=np):
        return xp.stack([self.field(i, z, xp) for i in range(self.n_u)], axis=-1)

    def dynamics(self, z, u, xp=np):
        return self.input_matrix(z, xp) @ u

    def coefficient(self, i, j, exponents):
        """Coefficient of the monomial ``exponents`` in component ``j`` of ``Zhat_i`` (0 if absent)."""

        for coeff, e in self.fields[i][j]:
            if tuple(e) == tuple(exponents):
                return coeff

        return 0.0

    def describe(self):
        """Returns one human-readable line per field."""

        return [
            "Z{}hat = ({})".format(i + 1, ", ".join(format_polynomial(terms) for terms in self.fields[i]))
            for i in range(self.n_u)
        ]


def _richardson(values):
    """
    Extrapolates ``g(eps) -> g(0)`` from samples at ``eps, eps/2, eps/4`` (eliminates the first and second order
    terms).
    """

    g1, g2, g3 = values
    coarse = 2 * g2 - g1
    fine = 2 * g3 - g2
    return (4 * fine - coarse) / 3


def extract_homogeneous_approx(chart, model, samples=40, radius=0.5, seed=0):
    """
    Extracts the homogeneous nilpotent approximation of ``model`` in the privileged chart by evaluating the dilation
    limits ``Zhat_{i,j}(z) = lim eps^{1 - w_j} Z_{i,j}(Lambda_eps z)`` on a sample grid (Richardson extrapolation over
    ``eps`` in ``{1e-2, 5e-3, 2.5e-3}``) and fitting the monomials of weighted degree ``w_j - 1`` by least squares.
    Coefficients below ``1e-8`` are zeroed.

    Args:
        chart (:obj:`PrivilegedChart`): the chart.
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model.
        samples (:obj:`int`): number of sample points.
        radius (:obj:`float`): half-width of the sample box around the origin.
        seed (:obj:`int`): seed of the sample points.

    Returns:
        :obj:`HomogeneousApprox`: The approximation.

    Raises:
        :obj:`DivergentLimit`: If the extrapolated samples are not fitted by a weighted-homogeneous polynomial to
            ``1e-6``.
    """

    charted = ChartedModel(model, chart)
    weights = np.array(chart.weights)
    points = np.random.default_rng(seed).uniform(-radius, radius, size=(samples, chart.n))

    def scaled_field(i, eps):
        dilation = jnp.asarray(eps ** weights.astype(float))
        scale = jnp.asarray(eps ** (1.0 - weights.astype(float)))
        return jax.jit(jax.vmap(lambda z: scale * charted.field(i, dilation * z)))

    fields = []
    worst = 0.0
    for i in range(model.n_u):
        limits = _richardson([np.asarray(scaled_field(i, eps)(jnp.asarray(points))) for eps in RICHARDSON_EPSILONS])

        components = []
        for j in range(chart.n):
            exponents = _weighted_monomials(chart.weights, chart.weights[j] - 1)
            basis = np.column_stack([_monomial(points, e) * np.ones(samples) for e in exponents])
            coeffs, *_ = np.linalg.lstsq(basis, limits[:, j], rcond=None)

            residual = float(np.max(np.abs(basis @ coeffs - limits[:, j])))
            scale = 1.0 + float(np.max(np.abs(limits[:, j])))
            worst = max(worst, residual / scale)
            if residual > DIVERGENCE_RESIDUAL * scale:
                raise DivergentLimit(
                    "The dilation limit is not weighted-homogeneous", field=i + 1, component=j + 1, residual=residual
                )

            components.append(
                tuple((float(c), e) for c, e in zip(coeffs, exponents) if abs(c) >= COEFFICIENT_ZERO)
            )

        fields.append(tuple(components))

    approx = HomogeneousApprox(
        fields=tuple(fields), r=tuple(chart.weights), s=(1,) * model.n_u, tau=0, fit_residual=worst
    )
    logger.debug("Homogeneous approximation extracted", model=model.name, fit_residual=worst)

    return approx


def verify_homogeneity(approx, r=None, samples=HOMOGENEITY_SAMPLES, seed=0):
    """
    Checks the ``(r, s, tau)``-homogeneity of an approximation:
    ``Zhat(Lambda_a z) Delta_a u = a^tau Lambda_a Zhat(z) u`` over random ``z``, ``u`` in ``[-1, 1]`` and
    ``a`` in ``(0, 2]``.

    Args:
        approx (:obj:`HomogeneousApprox`): the approximation.
        r (:obj:`tuple`): optional state dilation exponents overriding ``approx.r``.
        samples (:obj:`int`): number of random samples.
        seed (:obj:`int`): the seed of the samples.

    Returns:
        :obj:`float`: The maximum residual (infinity norm).
    """

    r = np.array(approx.r if r is None else r, dtype=float)
    s = np.array(approx.s, dtype=float)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for _ in range(samples):
        z = rng.uniform(-1.0, 1.0, approx.n_x)
        u = rng.uniform(-1.0, 1.0, approx.n_u)
        alpha = 2.0 * (1.0 - rng.uniform())  # in (0, 2]

        lhs = approx.dynamics(alpha**r * z, alpha**s * u)
        rhs = alpha**approx.tau * alpha**r * approx.dynamics(z, u)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))

    return worst


def check_triangular(approx):
    """Whether component ``j`` of every field only depends on ``z_1..z_{j-1}``."""

    for i in range(approx.n_u):
        for j, terms in enumerate(approx.fields[i]):
            for _, exponents in terms:
                if any(exponents[k] for k in range(j, approx.n_x)):
                    return False

    return True


def check_nilpotent(approx, samples=5, seed=0, tol=1e-9):
    """
    Checks that every left-normalized bracket of the approximation's fields of depth ``w_{n_x} + 1`` vanishes at random
    points.

    Returns:
        :obj:`bool`: Whether all the evaluated brackets vanish (up to ``tol``).
    """

    generators = [lambda z, i=i: approx.field(i, z, jnp) for i in range(approx.n_u)]
    depth = max(approx.r) + 1

    words = list(generators)
    for _ in range(depth - 1):
        words = [bracket_fn(g, w) for g in generators for w in words]

    points = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(samples, approx.n_x))
    for point in points:
        for w in words:
            if np.max(np.abs(np.asarray(w(jnp.asarray(point))))) > tol:
                return False

    return True


def approximation_slopes(chart, model, approx, epsilons=None, samples=10, seed=0):
    """
    Estimates, for every field ``i`` and component ``j``, the log-log slope of ``max |Z_ij - Zhat_ij|`` at
    ``Lambda_eps z`` against ``eps``. For a valid approximation the slope is at least ``w_j``.

    Components whose difference vanishes to round-off are reported with an infinite slope.

    Returns:
        :obj:`dict`: ``{(i, j): slope}`` with 0-based indices.
    """

    if epsilons is None:
        epsilons = np.logspace(-3, -1, 9)

    charted = ChartedModel(model, chart)
    weights = np.array(chart.weights, dtype=float)
    points = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(samples, chart.n))

    slopes = {}
    for i in range(model.n_u):
        exact = jax.jit(jax.vmap(lambda z, i=i: charted.field(i, z)))
        errors = []
        for eps in epsilons:
            scaled = points * eps**weights
            errors.append(np.max(np.abs(np.asarray(exact(jnp.asarray(scaled))) - approx.field(i, scaled)), axis=0))

        errors = np.array(errors)
        for j in range(chart.n):
            if np.max(errors[:, j]) < 1e-14:
                slopes[(i, j)] = np.inf
            else:
                slopes[(i, j)] = float(np.polyfit(np.log(epsilons), np.log(errors[:, j] + 1e-300), 1)[0])

    return slopes
