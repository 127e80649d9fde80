"""Exception hierarchy shared by all modules."""


class FracregError(Exception):
    """Base class for every error raised by the package."""


class GridError(FracregError, ValueError):
    pass


class InvalidBoundsError(GridError):
    pass


class TooCoarseError(GridError):
    pass


class NonFiniteSampleError(GridError):
    pass


class AliasingRiskError(FracregError, ValueError):
    pass


class BranchError(FracregError, ValueError):
    pass


class CalibrationError(FracregError):
    pass


class SingularQuadratureError(FracregError, ValueError):
    pass


class QuadratureNonconvergenceError(FracregError):
    pass


class FitError(FracregError):
    pass


class IllConditionedFitError(FitError):
    pass


class WindowTooNarrowError(FitError):
    pass


class ExponentCollisionError(FitError, ValueError):
    pass


class SolverError(FracregError):
    pass


class SingularSystemError(SolverError):
    pass


class NearEigenvalueError(SolverError):
    pass


class InsufficientScalesError(FracregError, ValueError):
    pass


class IncompatibleGridsError(FracregError, ValueError):
    pass


class ConfigError(FracregError, ValueError):
    pass


class ParseError(ConfigError):
    """Formula parse failure; ``position`` is the 0-based offset into the text."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position
