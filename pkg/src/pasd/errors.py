"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
module failures one-to-one onto process exit statuses.
"""


class PasdError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class GroupLevelMeasure(PasdError):
    """An individual-level operation was requested for a group-level measure (AUC)."""

    exit_code = 10


class MeasureMismatch(PasdError):
    """The measure is incompatible with the requested method."""

    exit_code = 11


class SubgroupTooSmall(PasdError):
    """A subgroup is below the measure's minimum size."""

    exit_code = 12


class DatasetTooSmall(PasdError):
    exit_code = 13


class DimensionMismatch(PasdError):
    exit_code = 14


class WeightSumViolation(PasdError):
    exit_code = 15


class DegenerateComponent(PasdError):
    """An EM component received (numerically) zero total responsibility."""

    exit_code = 16


class SingularHessian(PasdError):
    exit_code = 17


class TooFewRows(PasdError):
    exit_code = 18


class MissingColumn(PasdError):
    exit_code = 20

    def __init__(self, name: str):
        super().__init__(f"column {name!r} not found in header")
        self.name = name


class ParseError(PasdError):
    exit_code = 21

    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a number")
        self.row = row
        self.column = column
        self.value = value


class ReplicateError(PasdError):
    """A simulation replicate failed; wraps the original error with its index."""

    exit_code = 30

    def __init__(self, replicate: int, cause: BaseException):
        super().__init__(f"replicate {replicate} failed: {cause!r}")
        self.replicate = replicate
        self.cause = cause


class NonpositiveMu(UserWarning):
    """Performance estimates <= 0 were clamped before the scaled chi-square density."""
