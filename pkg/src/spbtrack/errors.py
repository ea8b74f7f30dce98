"""Exception types shared across the package."""


class SpbTrackError(Exception):
    """Base class for all package errors."""


class CholeskyFailure(SpbTrackError):
    """Covariance is not positive semi-definite, even after one jitter attempt."""


class NonFiniteInput(SpbTrackError):
    """A measurement or state vector contains NaN or infinity."""


class DimensionMismatch(SpbTrackError):
    """Vectors or matrices have incompatible shapes."""


class ParseError(SpbTrackError):
    """A file could not be parsed; carries the path and 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class UnknownKeyError(SpbTrackError):
    """Config file contains a key that is not recognized."""


class ConfigTypeError(SpbTrackError):
    """Config value has the wrong type."""


class RangeViolation(SpbTrackError):
    """Config value is outside its allowed range."""


class MissingScores(SpbTrackError):
    """Tracker outputs lack confidence scores needed for a recall sweep."""


class EmptyInput(SpbTrackError):
    """An operation requiring data received an empty collection."""


class InvalidSpec(SpbTrackError):
    """Scenario specification violates a constraint."""


class OutOfOrderFrame(SpbTrackError):
    """Frame timestamps regressed within a sequence."""


class MissingDetection(SpbTrackError):
    """A feature sidecar row references a detection that does not exist."""
