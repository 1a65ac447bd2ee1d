import pytest
import random


@pytest.fixture(scope="session", autouse=True)
def prng_seed():
    random.seed(0)


def get_random_vector(size, low=-1.0, high=1.0):
    return tuple(random.uniform(low, high) for _ in range(size))
