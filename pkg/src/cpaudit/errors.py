"""Exception hierarchy.

The three top-level families map onto CLI exit codes: configuration (2),
data (3) and numeric failures (4).
"""


class CPAuditError(Exception):
    exit_code = 1


class ConfigError(CPAuditError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InvalidKeepProbability(ConfigError):
    pass


class DataError(CPAuditError, ValueError):
    exit_code = 3


class EmptyPartition(DataError):
    pass


class EmptyScores(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NumericError(CPAuditError, ArithmeticError):
    exit_code = 4


class DomainError(NumericError, ValueError):
    pass


class SingularDesign(NumericError):
    pass


class Diverged(NumericError):
    pass


class ScaleUnderflow(NumericError):
    pass


class InfiniteMeasure(NumericError):
    pass


class GridTooCoarse(NumericError):
    pass
