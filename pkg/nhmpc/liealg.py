import jax
import jax.numpy as jnp
import numpy as np
from dataclasses import dataclass, field

from common.exceptions import BasicException, InvalidParameter, ContractViolation
from common.constants import (
    RANK_RELATIVE_THRESHOLD,
    REGULARITY_SAMPLES,
    REGULARITY_RADIUS,
    DEFAULT_MAX_DEPTH,
    DERIVATIVE_ZERO,
    DERIVATIVE_NONZERO,
)

from nhmpc.logger import get_logger

logger = get_logger(component="LieAlgebra")


class NotControllableAtDepth(BasicException):
    """Raised when the brackets up to the maximum depth do not span the tangent space."""


class IrregularPoint(BasicException):
    """Raised when the rank pattern of the distributions changes around the given point."""


class AmbiguousOrder(BasicException):
    """Raised when a non-holonomic derivative falls in the tolerance dead-zone between zero and non-zero."""


@dataclass(frozen=True)
class BracketWord:
    """
    A bracket word over the input vector fields.

    ``tree`` is either a generator index (1-based) or a pair ``(left, right)`` of trees standing for
    ``[left, right]``.
    """

    tree: object

    @classmethod
    def generator(cls, i):
        if not isinstance(i, int) or i < 1:
            raise InvalidParameter("Generator indices are 1-based integers", index=i)

        return cls(i)

    @property
    def depth(self):
        return _depth(self.tree)

    def bracket(self, other):
        """Returns the word ``[self, other]``."""
        return BracketWord((self.tree, other.tree))

    def generators(self):
        """Returns the set of generator indices used by the word."""
        return _leaves(self.tree)

    def __str__(self):
        return _render(self.tree)


def _depth(tree):
    if isinstance(tree, tuple):
        return max(_depth(tree[0]), _depth(tree[1])) + 1

    return 1


def _leaves(tree):
    if isinstance(tree, tuple):
        return _leaves(tree[0]) | _leaves(tree[1])

    return {tree}


def _render(tree):
    if isinstance(tree, tuple):
        return "[{},{}]".format(_render(tree[0]), _render(tree[1]))

    return "X{}".format(tree)


class VectorField:
    """
    A vector field evaluator with its Jacobian.

    Args:
        fn (:obj:`callable`): a jax-traceable function ``x -> R^n``.
        jac (:obj:`callable`): an optional hand-coded numpy Jacobian ``x -> R^{n x n}``. When missing, the Jacobian is
            obtained by forward-mode differentiation of ``fn``.
        label (:obj:`str`): a printable name.
    """

    def __init__(self, fn, jac=None, label=""):
        self.fn = fn
        self.jac = jac
        self.label = label

    def __call__(self, x):
        return np.asarray(self.fn(jnp.asarray(x, dtype=jnp.float64)))

    def jacobian(self, x):
        if self.jac is not None:
            return np.asarray(self.jac(np.asarray(x, dtype=float)))

        return np.asarray(jax.jacfwd(self.fn)(jnp.asarray(x, dtype=jnp.float64)))

    def bracket(self, other):
        """Returns the field ``[self, other]`` as a new (traceable) :obj:`VectorField`."""

        return VectorField(bracket_fn(self.fn, other.fn), label="[{},{}]".format(self.label, other.label))


def bracket_fn(X, Y):
    """
    Builds the traceable function ``x -> (dY/dx) X - (dX/dx) Y``.

    Args:
        X (:obj:`callable`): a traceable vector field.
        Y (:obj:`callable`): a traceable vector field.

    Returns:
        :obj:`callable`: The bracket ``[X, Y]``.
    """

    def bracket(x):
        return jax.jvp(Y, (x,), (X(x),))[1] - jax.jvp(X, (x,), (Y(x),))[1]

    return bracket


def lie_derivative_fn(X, fn):
    """Builds the traceable function ``x -> (d fn/dx) X(x)``, the derivative of ``fn`` along ``X``."""

    def derived(x):
        return jax.jvp(fn, (x,), (X(x),))[1]

    return derived


def generator_fields(model):
    """
    Wraps the input vector fields of a model as :obj:`VectorField` evaluators (with the model's Jacobians).

    Args:
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model.

    Returns:
        :obj:`list`: One :obj:`VectorField` per input, labelled ``X1``, ``X2``, ...
    """

    return [
        VectorField(lambda x, i=i: model.field(i, x, jnp), model.jacobians[i], "X{}".format(i + 1))
        for i in range(model.n_u)
    ]


def word_field(model, word):
    """Returns the :obj:`VectorField` of a bracket word of the model's input fields."""

    generators = generator_fields(model)
    if max(word.generators()) > model.n_u:
        raise InvalidParameter("The word references an unknown generator", word=str(word), n_u=model.n_u)

    def build(tree):
        if isinstance(tree, tuple):
            return build(tree[0]).bracket(build(tree[1]))

        return generators[tree - 1]

    return build(word.tree)


def evaluate_word(model, word, x):
    """Evaluates the vector field of a bracket word at ``x``."""

    return word_field(model, word)(model.check_state(x))


def lie_bracket(X, Y, x):
    """
    Evaluates the Lie bracket ``[X, Y](x) = (dY/dx) X - (dX/dx) Y``.

    Args:
        X (:obj:`VectorField`): the first field.
        Y (:obj:`VectorField`): the second field.
        x (:obj:`array`): the evaluation point.

    Returns:
        :obj:`numpy.ndarray`: The bracket at ``x``.

    Raises:
        :obj:`ContractViolation`: If the fields do not live on the same space as ``x``.
    """

    x = np.asarray(x, dtype=float)
    x_val = X(x)
    y_val = Y(x)

    if x_val.shape != x.shape or y_val.shape != x.shape:
        raise ContractViolation("The fields and the point must have the same dimension", x=x.shape)

    return Y.jacobian(x) @ x_val - X.jacobian(x) @ y_val


def numerical_rank(columns):
    """Rank of the matrix with the given columns, with singular values below ``1e-9 * sigma_max`` treated as zero."""

    if not columns:
        return 0

    sigma = np.linalg.svd(np.column_stack(columns), compute_uv=False)
    if sigma[0] == 0.0:
        return 0

    return int(np.sum(sigma > RANK_RELATIVE_THRESHOLD * sigma[0]))


@dataclass(frozen=True)
class LieFiltration:
    """
    The filtration of distributions generated by the input fields at a point, with its adapted frame.

    Attributes:
        d (:obj:`numpy.ndarray`): the point (setpoint).
        basis_words (:obj:`tuple`): the ``n_x`` accepted :obj:`BracketWord` of the adapted frame.
        frame (:obj:`numpy.ndarray`): the ``n_x x n_x`` matrix whose columns are the adapted-frame fields at ``d``.
        growth (:obj:`tuple`): the growth vector ``(n_1, ..., n_r)``.
        weights (:obj:`tuple`): the weights ``(w_1, ..., w_{n_x})``.
        degree (:obj:`int`): the degree of non-holonomy ``r``.
        basis_fields (:obj:`tuple`): the adapted-frame fields, as :obj:`VectorField` evaluators.
    """

    d: np.ndarray
    basis_words: tuple
    frame: np.ndarray
    growth: tuple
    weights: tuple
    degree: int
    basis_fields: tuple = field(repr=False, compare=False)

    def report(self):
        """Returns the filtration as a dict of printable values."""

        return {
            "growth": self.growth,
            "weights": self.weights,
            "degree": self.degree,
            "basis": [str(w) for w in self.basis_words],
            "frame": self.frame.tolist(),
        }


def _greedy_layers(model, d, max_depth):
    """
    Greedy selection of the adapted frame: generators first, then the left-normalized words ``[X_i, W]`` with ``i``
    ascending and ``W`` running over the words accepted at the previous depth. A word is accepted iff it increases the
    rank of the accumulated frame at ``d``.

    Returns:
        :obj:`tuple`: ``(accepted, candidates, growth)`` where ``accepted`` is a list of ``(word, field, depth)``,
        ``candidates`` maps each depth to every tried ``(word, field)`` and ``growth`` is the growth vector.
    """

    generators = generator_fields(model)
    gen_words = [BracketWord.generator(i + 1) for i in range(model.n_u)]

    accepted = []
    columns = []
    candidates = {}
    growth = []

    layer = list(zip(gen_words, generators))
    depth = 1
    while True:
        candidates[depth] = layer
        newly_accepted = []
        for word, vf in layer:
            value = vf(d)
            if numerical_rank(columns + [value]) > len(columns):
                columns.append(value)
                accepted.append((word, vf, depth))
                newly_accepted.append((word, vf))
                logger.debug("Accepted bracket word", word=str(word), depth=depth)

        growth.append(len(columns))
        if len(columns) == model.n_x:
            return accepted, candidates, tuple(growth)

        if depth >= max_depth or not newly_accepted:
            raise NotControllableAtDepth(
                "The brackets do not span the tangent space", max_depth=max_depth, growth=tuple(growth)
            )

        depth += 1
        layer = [
            (gen_word.bracket(word), gen.bracket(vf))
            for gen_word, gen in zip(gen_words, generators)
            for word, vf in newly_accepted
        ]


def build_filtration(model, d, max_depth=DEFAULT_MAX_DEPTH, check_regularity=True, seed=0):
    """
    Builds the filtration of the distributions generated by the input fields of ``model`` at ``d``.

    Args:
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model.
        d (:obj:`array`): the point (setpoint).
        max_depth (:obj:`int`): the deepest bracket nesting to explore.
        check_regularity (:obj:`bool`): whether to check that the rank pattern is the same at
            ``8`` random points at distance ``1e-4`` from ``d``.
        seed (:obj:`int`): the seed of the perturbations.

    Returns:
        :obj:`LieFiltration`: The filtration with its adapted frame.

    Raises:
        :obj:`NotControllableAtDepth`: If full rank is not reached by ``max_depth``.
        :obj:`IrregularPoint`: If the rank pattern differs around ``d``.
    """

    d = model.check_state(d)
    accepted, candidates, growth = _greedy_layers(model, d, max_depth)

    if check_regularity:
        rng = np.random.default_rng(seed)
        for _ in range(REGULARITY_SAMPLES):
            direction = rng.standard_normal(model.n_x)
            point = d + REGULARITY_RADIUS * direction / np.linalg.norm(direction)

            columns = []
            for depth, expected in enumerate(growth, start=1):
                columns.extend(vf(point) for _, vf in candidates[depth])
                rank = numerical_rank(columns)
                if rank != expected:
                    raise IrregularPoint(
                        "The rank pattern changes around the setpoint", depth=depth, expected=expected, found=rank
                    )

    frame = np.column_stack([vf(d) for _, vf, _ in accepted])
    filtration = LieFiltration(
        d=d,
        basis_words=tuple(word for word, _, _ in accepted),
        frame=frame,
        growth=growth,
        weights=tuple(depth for _, _, depth in accepted),
        degree=len(growth),
        basis_fields=tuple(vf for _, vf, _ in accepted),
    )
    logger.debug("Filtration built", model=model.name, growth=growth, weights=filtration.weights)

    return filtration


def larc_check(model, d, max_depth=DEFAULT_MAX_DEPTH):
    """
    Checks the Lie algebra rank condition at ``d``: whether the brackets up to ``max_depth`` span the tangent space.

    Returns:
        :obj:`bool`: True iff the greedy filtration reaches full rank by ``max_depth``.
    """

    try:
        _greedy_layers(model, model.check_state(d), max_depth)
        return True

    except NotControllableAtDepth:
        return False


def classify_derivative(value):
    """
    Classifies a non-holonomic derivative as zero (False) or non-zero (True).

    Raises:
        :obj:`AmbiguousOrder`: If ``1e-8 <= |value| <= 1e-6``.
    """

    magnitude = abs(float(value))
    if magnitude > DERIVATIVE_NONZERO:
        return True

    elif magnitude < DERIVATIVE_ZERO:
        return False

    raise AmbiguousOrder("Non-holonomic derivative in the tolerance dead-zone", value=float(value))


def nonholonomic_order(model, filtration, j, function=None):
    """
    Computes the non-holonomic order at the filtration point of the coordinate function ``x -> x_j - d_j`` (or of a
    given function): the largest ``k`` such that every nested Lie derivative of order ``< k`` along the input fields
    vanishes.

    Words up to length ``w_{n_x}`` are explored; a function whose derivatives all vanish up to that length is reported
    with order ``w_{n_x} + 1``.

    Args:
        model (:obj:`VehicleModel <nhmpc.models.VehicleModel>`): the model.
        filtration (:obj:`LieFiltration`): the filtration at the point of interest.
        j (:obj:`int`): the 0-based coordinate index. Ignored when ``function`` is given.
        function (:obj:`callable`): an optional jax-traceable scalar function of the state.

    Returns:
        :obj:`int`: The non-holonomic order.

    Raises:
        :obj:`AmbiguousOrder`: If a derivative falls in the tolerance dead-zone.
    """

    d = jnp.asarray(filtration.d)
    if function is None:
        if not 0 <= j < model.n_x:
            raise ContractViolation("Coordinate index out of range", j=j, n_x=model.n_x)

        def function(x):
            return x[j] - d[j]

    generators = [vf.fn for vf in generator_fields(model)]
    max_order = filtration.weights[-1]

    layer = [function]
    for order in range(max_order + 1):
        nonzero = [classify_derivative(g(d)) for g in layer]
        if any(nonzero):
            return order

        layer = [lie_derivative_fn(X, g) for X in generators for g in layer]

    return max_order + 1
