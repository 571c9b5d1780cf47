"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""


class UsageError(Exception):
    """Bad flags, unknown options, or invalid configuration values."""


class DataError(Exception):
    """Schema violations, inconsistent datasets, or unresolvable references."""


class NumericalError(Exception):
    """Degenerate numerical input (zero vectors, unavailable estimates)."""
