"""Exception hierarchy shared across the package.

The CLI maps UsageError to exit code 1 and every other CodemixError to
exit code 2 (data / model errors).
"""


class CodemixError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(CodemixError):
    """Bad command-line arguments or malformed config keys."""


class DataError(CodemixError):
    """Malformed input data: bad TSV/CoNLL lines, bad encodings, empty corpora."""


class NonFiniteError(CodemixError):
    """A tensor produced NaN or Inf. Always a hard error, never a warning."""


class ShapeError(CodemixError):
    """Tensor shape mismatch (e.g. checkpoint tensor vs. model config)."""


class CheckpointError(DataError):
    """Corrupt or truncated checkpoint container."""


class TrainingDivergedError(CodemixError):
    """Training loss became non-finite; the model was rolled back to the
    last epoch-end snapshot before this was raised."""
