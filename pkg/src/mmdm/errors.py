"""Exception types shared across the package."""


class MMDMError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(MMDMError, ValueError):
    """Operation input violates a shape or value precondition."""


class InvalidConfigError(MMDMError, ValueError):
    """A configuration value is out of range or unknown."""


class InvalidSkeletonError(MMDMError, ValueError):
    """Skeleton structure violates the joint-tree or part-partition contract."""


class DecodeError(MMDMError, ValueError):
    """Base class for on-disk format decoding failures."""


class BadMagicError(DecodeError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(DecodeError):
    """File carries an unsupported format version."""


class TruncatedPayloadError(DecodeError):
    """Header-declared payload size disagrees with the bytes present."""


class DegenerateSoftmaxError(MMDMError, ValueError):
    """An attention bias row blocks every key, leaving nothing to normalize."""


class NumericFailureError(MMDMError, RuntimeError):
    """A numeric computation produced non-finite values.

    Attributes:
        step: diffusion or training step at which the failure occurred.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class TrainingFailureError(MMDMError, RuntimeError):
    """Training reached an unusable state (e.g. embedding collapse)."""


class IncompatibleCheckpointError(MMDMError, ValueError):
    """Checkpoint contents do not match the requested configuration."""
