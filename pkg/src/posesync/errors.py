"""Exception types shared across the package."""


class PoseSyncError(Exception):
    """Base class for all errors raised by posesync."""


class G2OParseError(PoseSyncError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DisconnectedGraphError(PoseSyncError, ValueError):
    pass


class NotPositiveDefiniteError(PoseSyncError, ValueError):
    pass


class RetractionError(PoseSyncError, ArithmeticError):
    """Raised when a retraction step is rank deficient."""
