"""Exception types shared across the package."""


class ScenesimError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ScenesimError):
    """An argument violates a documented precondition."""


class TrackingParseError(ScenesimError):
    """Malformed tracking data; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class DivergenceError(ScenesimError):
    """Training produced a non-finite loss."""


class StaleModelError(ScenesimError):
    """Cached embeddings do not match the current model version."""


class PosteriorNotReadyError(ScenesimError):
    """An operation needs distance statistics that have not been fitted."""


class CalibrationError(ScenesimError):
    """A consistency target is unreachable; reports the achievable maximum."""

    def __init__(self, message: str, achievable_max: float | None = None):
        super().__init__(message)
        self.achievable_max = achievable_max


class NotReadyError(ScenesimError):
    """A metric was requested before its prerequisite phases completed."""


class OutOfOrderError(ScenesimError):
    """A response does not match the session's pending query."""


class ConflictError(ScenesimError):
    """A duplicate response for an already-answered query."""
