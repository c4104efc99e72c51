"""Exception types shared across the package."""


class WdciError(Exception):
    """Base class for all package errors."""


class ShapeError(WdciError, ValueError):
    """Tensor shapes are inconsistent with an operation's contract."""


class DimensionError(ShapeError):
    """A specific axis has an invalid size (message names the axis)."""


class ArgumentError(WdciError, ValueError):
    """A scalar argument is out of its legal range."""


class StructureError(WdciError, ValueError):
    """A composite object (pyramid, checkpoint) is missing required parts."""


class ValidationError(WdciError, ValueError):
    """Input data violates a documented precondition."""


class IngestionError(WdciError, ValueError):
    """A dataset directory does not match the expected layout."""


class ConfigError(WdciError, ValueError):
    """Invalid or inconsistent configuration."""


class TrainingDiverged(WdciError, RuntimeError):
    """Training aborted on a non-finite loss; carries diagnostics."""

    def __init__(self, message, batch_index=None, breakdown=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.breakdown = breakdown
