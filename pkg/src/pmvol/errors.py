"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1,
ComputationError -> 2, DataIOError (and OSError) -> 3.
"""


class PmvolError(Exception):
    pass


class ValidationError(PmvolError):
    """Bad inputs: config errors, invariant violations, missing columns."""


class ComputationError(PmvolError):
    """Estimation failures: rank deficiency, non-convergence, degenerate samples."""


class DataIOError(PmvolError):
    """Unreadable or unwritable sources and malformed files."""


class SchemaError(DataIOError):
    """A file parsed but its schema does not match the expected layout."""


class RankError(ComputationError):
    """Design matrix is rank deficient."""


class ConvergenceError(ComputationError):
    """An iterative optimizer failed to converge."""
