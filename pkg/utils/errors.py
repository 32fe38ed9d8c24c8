"""Exception types raised by the beamchain utilities.

Every error carries the process exit code the CLI maps it to.
"""


class BeamChainError(Exception):
    """Base class for all beamchain errors."""

    exit_code = 2


# ---- Model errors ----

class ModelError(BeamChainError):
    exit_code = 3


class NonPositiveCoefficient(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class SingularBoundaryMatrix(ModelError):
    pass


class ZeroLengthSegment(ModelError):
    pass


class UnsupportedClosure(ModelError):
    pass


# ---- Configuration errors ----

class ConfigError(BeamChainError):
    exit_code = 3


class ParseError(ConfigError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(ConfigError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---- Numerical errors ----

class NumericalError(BeamChainError):
    exit_code = 2


class ConvergenceFailure(NumericalError):
    pass


class DimensionTooLarge(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class EmptySpectrum(NumericalError):
    pass


class AssemblyDimension(NumericalError):
    pass
