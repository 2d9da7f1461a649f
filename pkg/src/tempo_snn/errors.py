"""Exception hierarchy.

The CLI maps ``DataError`` to exit code 2 and ``NumericalError`` to 3.
"""


class DataError(ValueError):
    """Malformed model/dataset files or inconsistent shapes."""


class NumericalError(ArithmeticError):
    """A matrix operation has no trustworthy result for the given input."""


class SingularMatrixError(NumericalError):
    pass


class NoRealPowerError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    def __init__(self, message, condition_number):
        super().__init__(message)
        self.condition_number = condition_number


class RatioError(NumericalError):
    """The resolution ratio is not admissible for the requested method."""
