"""
Exception hierarchy shared by every package.

The CLI maps these onto exit codes: input/contract problems exit with 2,
numerical failures with 3.
"""


class SpixError(Exception):
    """Base class for all library errors"""


class ShapeError(SpixError, ValueError):
    """Array dimensions or channel counts do not line up"""


class GeometryError(SpixError, ValueError):
    """Pixel/seed geometry is invalid (out of bounds, empty candidate set)"""


class DataError(SpixError, ValueError):
    """Input data violates its contract (label ids, pairing, divisibility)"""


class ParameterError(SpixError, ValueError):
    """A scalar parameter is out of its allowed range"""


class NumericalError(SpixError, ArithmeticError):
    """A computation produced non-finite values"""


EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code"""
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL_ERROR
    return EXIT_INPUT_ERROR
