"""
Error hierarchy for the MRT toolkit

Every error carries the exit code the CLI reports for it:
    1 - configuration problems
    2 - runtime / numeric problems
    3 - checkpoint integrity problems
"""


class MRTError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class ConfigError(MRTError, ValueError):
    """Invalid run configuration, edit plan or CLI arguments."""

    exit_code = 1


class DimensionError(MRTError, ValueError):
    """Shape mismatch between tensors, editors or checkpoint arrays."""


class DegeneracyError(MRTError, ValueError):
    """A raw subspace matrix is (numerically) rank deficient."""

    def __init__(self, row: int, pivot_norm: float):
        self.row = row
        self.pivot_norm = pivot_norm
        super().__init__(
            f"raw_U is rank deficient: row {row} has pivot norm {pivot_norm:.3e} "
            f"after orthogonalization (threshold 1e-10)"
        )


class NumericError(MRTError, ArithmeticError):
    """Non-finite values, divergence or an empty supervision mask."""

    def __init__(self, message: str, step: int = None):
        self.step = step
        super().__init__(message)


class PreconditionError(MRTError):
    """A run was requested on a model that does not meet its precondition."""


class IntegrityError(MRTError):
    """Checkpoint file is truncated or corrupted."""

    exit_code = 3


class UnsupportedVersionError(IntegrityError):
    """Checkpoint was written by an unsupported format version."""
