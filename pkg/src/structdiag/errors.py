"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (2),
data problems (3) and numerical failures (4).
"""


class StructDiagError(Exception):
    """Base class for all errors raised by structdiag."""

    exit_code = 1


class ConfigError(StructDiagError, ValueError):
    exit_code = 2


class DataError(StructDiagError, ValueError):
    exit_code = 3


class NumericalError(StructDiagError, ArithmeticError):
    exit_code = 4


class InvalidArgumentError(DataError):
    pass


class InvalidFeatureSetError(DataError):
    pass


class InfeasibleSubsampleError(DataError):
    pass


class InsufficientSampleError(DataError):
    pass


class ShapeError(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyEvaluationError(DataError):
    pass


class DegenerateModelError(DataError):
    pass


class OOBUnavailableError(DataError):
    pass


class UnsupportedConfigurationError(DataError):
    pass


class SingularMatrixError(NumericalError):
    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class NumericalFailureError(NumericalError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class UndefinedKappaError(NumericalError):
    pass


class GenerationFailureError(NumericalError):
    pass
