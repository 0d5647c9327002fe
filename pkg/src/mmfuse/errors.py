"""Exception hierarchy shared across the toolkit.

Every error that crosses a module boundary derives from MmfuseError so the
CLI can map failures onto its documented exit codes.
"""


class MmfuseError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ShapeError(MmfuseError):
    """Operand shapes are incompatible with the requested operation."""

    exit_code = 4


class NumericError(MmfuseError):
    """A forward or backward step produced NaN/Inf or left an op's domain."""

    exit_code = 4


class GraphError(MmfuseError):
    """Misuse of the computation graph (double backward, non-scalar root)."""

    exit_code = 4


class ConfigError(MmfuseError):
    """Invalid or contradictory configuration values."""

    exit_code = 2


class DataError(MmfuseError):
    """Base class for dataset and container-format problems."""

    exit_code = 3


class BadMagicError(DataError):
    """Record file does not start with the expected magic bytes."""


class UnsupportedVersionError(DataError):
    """Record file carries a container version this build cannot read."""


class PayloadError(DataError):
    """Record payload is truncated or has trailing bytes."""


class DimensionMismatchError(DataError):
    """Embedding dimensions disagree with the manifest or expectations."""


class ManifestError(DataError):
    """Manifest is malformed: duplicate ids, missing files, bad splits."""


class EmptyInputError(MmfuseError):
    """An aggregation received zero frames or zero chunks."""

    exit_code = 3


class BatchTooSmallError(MmfuseError):
    """Marginal pairs cannot be formed from a batch of fewer than 2 items."""

    exit_code = 4


class CheckpointMismatchError(MmfuseError):
    """Checkpoint config digest does not match the requested configuration."""

    exit_code = 5
