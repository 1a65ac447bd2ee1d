import math
from functools import reduce
from pathlib import Path


def setup_data_folder(data_folder):
    """
    Create a data folder (e.g. the output folder of a run) if the folder does not exist.

    Args:
        data_folder (:obj:`str`): the path of the folder.
    """

    Path(data_folder).mkdir(parents=True, exist_ok=True)


def format_float(value):
    """
    Formats a number using the shortest decimal representation that round-trips to the same double.

    ``repr`` is locale-independent, so the output is stable across machines.

    Args:
        value (:obj:`float`): the number to format.

    Returns:
        :obj:`str`: The formatted number.
    """

    value = float(value)
    if value == 0.0:
        # -0.0 and 0.0 are written the same way
        return "0.0"

    return repr(value)


def format_vector(values):
    """Formats a sequence of numbers as a comma separated list of shortest round-trip floats."""

    return ", ".join(format_float(v) for v in values)


def parse_vector(text):
    """
    Parses a comma separated list of numbers. An empty (or blank) string is parsed as an empty tuple.

    Args:
        text (:obj:`str`): the text to parse.

    Returns:
        :obj:`tuple`: A tuple of floats.

    Raises:
        :obj:`ValueError`: if any of the items is not a number.
    """

    items = [item.strip() for item in text.split(",")]
    if items == [""]:
        return ()

    values = []
    for item in items:
        value = float(item)
        if not math.isfinite(value):
            raise ValueError("{} is not a finite number".format(item))

        values.append(value)

    return tuple(values)


def gcd_of(values):
    """
    Greatest common divisor of a non-empty sequence of positive integers.

    Args:
        values (:obj:`iterable`): the integers.

    Returns:
        :obj:`int`: The GCD of all the values.

    Raises:
        :obj:`ValueError`: if the sequence is empty or holds a value that is not a positive integer.
    """

    values = list(values)
    if not values:
        raise ValueError("the GCD of an empty sequence is undefined")

    for value in values:
        if int(value) != value or value <= 0:
            raise ValueError("{} is not a positive integer".format(value))

    return reduce(math.gcd, (int(value) for value in values))
