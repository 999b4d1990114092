"""Exception hierarchy with CLI exit codes."""


class TopoLyapError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TopoLyapError):
    exit_code = 2


class NumericalError(TopoLyapError):
    exit_code = 3


class ModelError(TopoLyapError):
    exit_code = 4


class ConfigParse(ConfigError):
    pass


class SchemaViolation(ConfigError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class SymmetryViolation(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class IndexOutOfRange(ModelError):
    pass


class UnsupportedDecomposition(ModelError):
    pass


class NoMidGapMode(ModelError):
    pass


class ChainTooShort(ModelError):
    pass


class NonOrthonormalBasis(ModelError):
    pass


class NormViolation(ModelError):
    pass


class SolverFailure(NumericalError):
    pass


class TrackingLost(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NonRealField(NumericalError):
    pass


class InvalidStep(NumericalError):
    pass


class NormDrift(NumericalError):
    def __init__(self, message, last_good_time=None):
        self.last_good_time = last_good_time
        super().__init__(message)
