"""Exception types shared across the package."""


class Pose2ViewError(Exception):
    """Base class for all package errors."""


class DegenerateRotation(Pose2ViewError):
    """Quaternion with (near-)zero norm cannot encode a rotation."""


class InvalidRotation(Pose2ViewError):
    """Matrix is not a proper rotation (orthonormal, det +1)."""


class InsufficientKeyposes(Pose2ViewError):
    """Trajectory interpolation needs at least two keyposes."""


class ParseError(Pose2ViewError):
    """Malformed dataset file content."""


class EmptyDataset(Pose2ViewError):
    """A dataset or split ended up with no samples."""


class EmptySplit(Pose2ViewError):
    """Train or test side of a split is empty."""


class UnknownSequence(Pose2ViewError):
    """A named sequence id does not occur in the sample list."""


class ChannelError(Pose2ViewError):
    """Image does not have the expected number of channels."""


class ShapeError(Pose2ViewError):
    """Tensor shapes are incompatible with the operation."""


class ConfigError(Pose2ViewError):
    """Invalid or inconsistent configuration."""


class CheckpointError(Pose2ViewError):
    """Checkpoint missing, malformed, or incompatible with the config."""


class DivergenceError(Pose2ViewError):
    """Training produced a non-finite loss."""


class AlignmentError(Pose2ViewError):
    """Paired streams have mismatched lengths."""


class LockError(Pose2ViewError):
    """Another experiment process holds the output directory lock."""
