import pytest
import random
import numpy as np

import nhmpc.logger
from nhmpc.logger import setup_logging
from nhmpc.models import make_unicycle, make_kinematic_car, make_one_trailer, make_two_trailer
from nhmpc.mpc import ClosedLoopTrace
from nhmpc.ocp import CONVERGED


@pytest.fixture(scope="session", autouse=True)
def prng_seed():
    random.seed(0)


@pytest.fixture(scope="session")
def unicycle():
    return make_unicycle()


@pytest.fixture(scope="session")
def car():
    return make_kinematic_car(0.2)


@pytest.fixture(scope="session")
def one_trailer():
    return make_one_trailer(0.2)


@pytest.fixture(scope="session")
def two_trailer():
    return make_two_trailer(0.2, 0.2)


@pytest.fixture(scope="session")
def vehicles(unicycle, car, one_trailer, two_trailer):
    return {"unicycle": unicycle, "kinematic_car": car, "one_trailer": one_trailer, "two_trailer": two_trailer}


def get_random_states(n, count, scale=1.0):
    rng = np.random.default_rng(random.getrandbits(32))
    return rng.uniform(-scale, scale, size=(count, n))


def make_trace(states, values, d=None, model_name="unicycle", params=None):
    states = np.asarray(states, dtype=float)
    n = len(states)
    return ClosedLoopTrace(
        times=0.25 * np.arange(n),
        states=states,
        inputs=np.zeros((n, 2)),
        values=np.asarray(values, dtype=float),
        iterations=np.zeros(n, dtype=int),
        statuses=(CONVERGED,) * n,
        d=np.zeros(states.shape[1]) if d is None else np.asarray(d, dtype=float),
        model_name=model_name,
        params=params or {},
        dt=0.25,
    )


@pytest.fixture(scope="session", autouse=True)
def silent_logging():
    # Only critical errors reach the console while testing
    if not nhmpc.logger.configured:
        setup_logging(silent=True)
