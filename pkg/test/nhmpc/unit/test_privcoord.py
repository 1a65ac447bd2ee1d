import pytest
import numpy as np
import jax.numpy as jnp
from dataclasses import replace

from common.exceptions import ContractViolation
from nhmpc.liealg import build_filtration, nonholonomic_order
from nhmpc.privcoord import (
    SingularFrame,
    DivergentLimit,
    ChartedModel,
    step1_transform,
    step2_corrections,
    build_chart,
    extract_homogeneous_approx,
    verify_homogeneity,
    check_triangular,
    check_nilpotent,
    approximation_slopes,
    format_monomial,
    format_polynomial,
)

from test.nhmpc.unit.conftest import get_random_states


@pytest.fixture(scope="module")
def charts(vehicles):
    charts = {}
    for name, model in vehicles.items():
        charts[name] = build_chart(build_filtration(model, np.zeros(model.n_x)), model)

    return charts


@pytest.fixture(scope="module")
def approximations(vehicles, charts):
    return {name: extract_homogeneous_approx(charts[name], model) for name, model in vehicles.items()}


def test_step1_unicycle_any_setpoint(unicycle):
    for d in get_random_states(3, 5, scale=2.0):
        filtration = build_filtration(unicycle, d)
        c, s = np.cos(d[2]), np.sin(d[2])
        for x in get_random_states(3, 5, scale=2.0):
            e = x - d
            expected = [e[0] * c + e[1] * s, e[2], e[0] * s - e[1] * c]
            assert np.allclose(step1_transform(filtration, x), expected, atol=1e-12)


def test_step1_car(car):
    l = car.params["l"]
    filtration = build_filtration(car, np.zeros(4))
    for x in get_random_states(4, 100):
        assert np.allclose(step1_transform(filtration, x), [x[0], x[3], -l * x[2], l * x[1]], atol=1e-12)


def test_step1_one_trailer(one_trailer):
    l1 = one_trailer.params["l1"]
    filtration = build_filtration(one_trailer, np.zeros(4))
    for x in get_random_states(4, 100):
        expected = [x[0], x[2], -x[1], l1 * (x[1] - l1 * x[3])]
        assert np.allclose(step1_transform(filtration, x), expected, atol=1e-12)


def test_step1_two_trailer(two_trailer):
    l1, l2 = two_trailer.params["l1"], two_trailer.params["l2"]
    filtration = build_filtration(two_trailer, np.zeros(5))
    for x in get_random_states(5, 100):
        expected = [
            x[0],
            x[2],
            -x[1],
            x[1] * (l1 + l2) - x[3] * l1 * (l1 + l2) - x[4] * l2**2,
            -x[1] * l1 * l2 + x[3] * l1**2 * l2 + x[4] * l1 * l2**2,
        ]
        assert np.allclose(step1_transform(filtration, x), expected, atol=1e-12)


def test_step1_singular_frame(unicycle):
    filtration = build_filtration(unicycle, np.zeros(3))
    singular = replace(filtration, frame=np.array([[1.0, 0, 0], [0, 1, 0], [1, 1, 0]]))
    with pytest.raises(SingularFrame):
        step1_transform(singular, np.zeros(3))


def test_step1_wrong_dimension(unicycle):
    with pytest.raises(ContractViolation):
        step1_transform(build_filtration(unicycle, np.zeros(3)), np.zeros(4))


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_step2_no_corrections_at_origin(vehicles, name):
    model = vehicles[name]
    corrections = step2_corrections(build_filtration(model, np.zeros(model.n_x)), model)
    assert len(corrections) == model.n_x
    assert not any(corrections)


def test_step2_model_mismatch(unicycle, car):
    filtration = build_filtration(unicycle, np.zeros(3))
    with pytest.raises(ContractViolation):
        step2_corrections(filtration, car)

    with pytest.raises(ContractViolation):
        build_chart(filtration, car)


def test_unicycle_chart_any_setpoint(unicycle):
    d = np.array([1.0, -0.5, 0.8])
    chart = build_chart(build_filtration(unicycle, d), unicycle)
    assert chart.is_linear
    assert np.allclose(chart.forward(d), 0)


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_chart_round_trip(vehicles, charts, name):
    chart = charts[name]
    assert np.allclose(chart.forward(np.zeros(chart.n)), 0)

    for z in get_random_states(chart.n, 20, scale=0.5):
        assert np.max(np.abs(chart.forward(chart.inverse(z)) - z)) < 1e-9


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_privileged_orders(vehicles, charts, name):
    # ord(z_j) = w_j
    model, chart = vehicles[name], charts[name]
    filtration = build_filtration(model, np.zeros(model.n_x))
    for j in range(model.n_x):
        order = nonholonomic_order(model, filtration, None, function=lambda x, j=j: chart.forward(x, jnp)[j])
        assert order == chart.weights[j]


def test_car_chart_with_steering_setpoint(car):
    # A non-zero steering angle at the setpoint needs step-2 corrections
    d = np.array([0.0, 0.0, 0.0, 0.3])
    filtration = build_filtration(car, d)
    chart = build_chart(filtration, car)

    assert not chart.is_linear
    assert np.allclose(chart.forward(d), 0)
    for z in get_random_states(4, 20, scale=0.5):
        assert np.max(np.abs(chart.forward(chart.inverse(z)) - z)) < 1e-9

    for j in range(4):
        order = nonholonomic_order(car, filtration, None, function=lambda x, j=j: chart.forward(x, jnp)[j])
        assert order == chart.weights[j]

    assert any(line.startswith("z4 = y4 - (") for line in chart.describe())


def test_chart_jacobians_are_inverse(charts):
    chart = charts["kinematic_car"]
    for x in get_random_states(4, 5, scale=0.3):
        assert np.allclose(chart.jacobian(x) @ chart.inverse_jacobian(chart.forward(x)), np.eye(4), atol=1e-10)


def test_chart_describe_unicycle(charts):
    expected = ["y1 = 1.0*x1", "y2 = 1.0*x3", "y3 = -1.0*x2", "z1 = y1", "z2 = y2", "z3 = y3"]
    assert charts["unicycle"].describe() == expected


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_charted_model_is_exact(vehicles, charts, name):
    model, chart = vehicles[name], charts[name]
    charted = ChartedModel(model, chart)
    for x in get_random_states(model.n_x, 100, scale=0.5):
        z = chart.forward(x)
        back = chart.inverse_jacobian(z)
        for i in range(model.n_u):
            field = back @ np.asarray(charted.field(i, jnp.asarray(z)))
            assert np.max(np.abs(field - model.field(i, x))) < 1e-10


def test_charted_unicycle_dynamics(unicycle, charts):
    charted = ChartedModel(unicycle, charts["unicycle"])
    # z = (x1, x3, -x2), so z' = (cos(x3) u1, u2, -sin(x3) u1)
    z = jnp.array([0.1, 0.4, -0.2])
    expected = [np.cos(0.4) * 0.5, -1.0, -np.sin(0.4) * 0.5]
    assert np.allclose(charted.dynamics(z, jnp.array([0.5, -1.0])), expected, atol=1e-12)


def test_charted_model_mismatch(car, charts):
    with pytest.raises(ContractViolation):
        ChartedModel(car, charts["unicycle"])


def test_homogeneous_approx_unicycle(approximations):
    approx = approximations["unicycle"]
    assert approx.r == (1, 1, 2)
    assert approx.s == (1, 1)
    assert approx.tau == 0

    z = np.array([0.3, -0.7, 0.2])
    assert np.allclose(approx.field(0, z), [1, 0, 0.7], atol=1e-6)
    assert np.allclose(approx.field(1, z), [0, 1, 0], atol=1e-6)
    assert approx.coefficient(0, 2, (0, 1, 0)) == pytest.approx(-1.0, abs=1e-6)
    assert approx.coefficient(0, 2, (1, 0, 0)) == 0.0


@pytest.mark.parametrize("name", ["kinematic_car", "one_trailer", "two_trailer"])
def test_homogeneous_approx_chained_form(vehicles, approximations, name):
    # Zhat_1 = (1, 0, -z2, -z3, ...) and Zhat_2 = e_2
    approx = approximations[name]
    n = vehicles[name].n_x
    for z in get_random_states(n, 10):
        expected = np.concatenate([[1.0, 0.0], -z[1 : n - 1]])
        assert np.allclose(approx.field(0, z), expected, atol=1e-6)
        assert np.allclose(approx.field(1, z), np.eye(n)[1], atol=1e-6)


def test_homogeneous_approx_batched(approximations):
    approx = approximations["kinematic_car"]
    z = get_random_states(4, 6)
    batch = approx.field(0, z)
    assert batch.shape == (6, 4)
    assert np.allclose(batch[2], approx.field(0, z[2]))


def test_homogeneous_approx_describe(approximations):
    lines = approximations["unicycle"].describe()
    assert len(lines) == 2
    assert lines[0].startswith("Z1hat = (")
    assert "z2" in lines[0]


def test_extract_with_wrong_weights(unicycle, charts):
    with pytest.raises(DivergentLimit):
        extract_homogeneous_approx(replace(charts["unicycle"], weights=(1, 1, 3)), unicycle)


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_verify_homogeneity(approximations, name):
    assert verify_homogeneity(approximations[name]) < 1e-12


def test_verify_homogeneity_wrong_weights(approximations):
    assert verify_homogeneity(approximations["unicycle"], r=(1, 1, 1)) > 0.1


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car", "one_trailer", "two_trailer"])
def test_triangular_and_nilpotent(approximations, name):
    assert check_triangular(approximations[name])
    assert check_nilpotent(approximations[name])


def test_not_triangular(approximations):
    approx = approximations["unicycle"]
    fields = ((((1.0, (0, 0, 1)),), (), ()), approx.fields[1])
    assert not check_triangular(replace(approx, fields=fields))


@pytest.mark.parametrize("name", ["unicycle", "kinematic_car"])
def test_approximation_order(vehicles, charts, approximations, name):
    chart = charts[name]
    slopes = approximation_slopes(chart, vehicles[name], approximations[name])
    for (i, j), slope in slopes.items():
        assert slope >= chart.weights[j] - 1 + 0.9


def test_format_monomial():
    assert format_monomial((0, 0, 0), "z") == "1"
    assert format_monomial((1, 0, 2), "z") == "z1*z3^2"
    assert format_monomial((0, 3), "y", divided=True) == "y2^3/3!"


def test_format_polynomial():
    assert format_polynomial(()) == "0"
    assert format_polynomial(((1.0, (0, 0)),)) == "1.0"
    assert format_polynomial(((-1.0, (0, 1)), (0.5, (2, 0)))) == "-1.0*z2 + 0.5*z1^2"
