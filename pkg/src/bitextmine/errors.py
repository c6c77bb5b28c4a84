"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""


class BitextMineError(Exception):
    """Base class for all package errors."""


class UsageError(BitextMineError):
    """Bad invocation: unknown flag, missing argument, invalid combination."""


class DataError(BitextMineError):
    """Malformed or inconsistent input data (files, corpora, checkpoints)."""


class CheckpointError(DataError):
    """Corrupt, truncated, or mismatched checkpoint file."""


class NumericalError(BitextMineError):
    """Non-finite loss/gradient or a degenerate numerical state."""
