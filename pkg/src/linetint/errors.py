"""Exception types shared across the package."""


class LinetintError(Exception):
    """Base class for all library errors."""


class ValidationError(LinetintError, ValueError):
    """An input violated a documented precondition or invariant."""


class ConfigError(LinetintError, ValueError):
    """A configuration file or override is malformed or names an unknown key."""


class TrainingDiverged(LinetintError, RuntimeError):
    """A loss became non-finite; a diagnostic state snapshot was written."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
