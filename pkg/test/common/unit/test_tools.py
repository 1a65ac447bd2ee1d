import os
import math
import pytest

from common.tools import setup_data_folder, format_float, format_vector, parse_vector, gcd_of
from test.common.unit.conftest import get_random_vector


def test_setup_data_folder():
    # This method should create a folder if it does not exist, and do nothing otherwise
    test_folder = "test_folder"
    assert not os.path.isdir(test_folder)

    setup_data_folder(test_folder)
    assert os.path.isdir(test_folder)

    # Calling it again must not fail
    setup_data_folder(test_folder)
    os.rmdir(test_folder)


def test_format_float():
    assert format_float(0.1) == "0.1"
    assert format_float(1) == "1.0"
    assert format_float(-0.0) == "0.0"
    assert format_float(1e-300) == "1e-300"
    assert format_float(math.pi) == "3.141592653589793"


def test_format_float_round_trip():
    # The shortest representation must read back to the very same double
    for value in get_random_vector(100, -1e3, 1e3):
        assert float(format_float(value)) == value


def test_format_vector():
    assert format_vector([]) == ""
    assert format_vector((1, 0.5, -2.25)) == "1.0, 0.5, -2.25"


def test_parse_vector():
    assert parse_vector("") == ()
    assert parse_vector("   ") == ()
    assert parse_vector("1") == (1.0,)
    assert parse_vector(" -0.4, 0.2,0, 1e-3 ") == (-0.4, 0.2, 0.0, 1e-3)

    values = get_random_vector(10)
    assert parse_vector(format_vector(values)) == values


def test_parse_vector_wrong_values():
    for text in ["a", "1.0, b", "1.0,,2.0", "inf", "1.0, nan"]:
        with pytest.raises(ValueError):
            parse_vector(text)


def test_gcd_of():
    assert gcd_of([12, 12, 6, 4]) == 2
    assert gcd_of((24, 24, 12, 8, 6, 24, 24)) == 2
    assert gcd_of([4, 4, 2]) == 2
    assert gcd_of([7]) == 7
    assert gcd_of([3.0, 9]) == 3


def test_gcd_of_wrong_values():
    with pytest.raises(ValueError):
        gcd_of([])

    with pytest.raises(ValueError):
        gcd_of([4, 0])

    with pytest.raises(ValueError):
        gcd_of([4, 2.5])
