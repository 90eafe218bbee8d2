"""Exception types shared across the package."""


class PrefDiffError(Exception):
    """Base class for package errors."""


class ConfigurationError(PrefDiffError):
    """Bad hyper-parameter or config-file value."""


class DataError(PrefDiffError):
    """Malformed or inconsistent rating data."""


class CheckpointError(PrefDiffError):
    """Checkpoint file missing, truncated, or mismatched."""


class TrainingError(PrefDiffError):
    """Training aborted (for example on a non-finite loss)."""
