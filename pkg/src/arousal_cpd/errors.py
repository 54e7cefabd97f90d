"""Exception hierarchy shared by all modules."""


class ArousalCPDError(Exception):
    """Base class for every error raised by this package."""


class InvalidFilterError(ArousalCPDError):
    pass


class SeriesTooShortError(ArousalCPDError):
    pass


class UpsamplingNotSupportedError(ArousalCPDError):
    pass


class IncompatibleSeriesError(ArousalCPDError):
    pass


class SegmentTooShortError(ArousalCPDError):
    pass


class FactorizationError(ArousalCPDError):
    pass


class InvalidKError(ArousalCPDError):
    pass


class IncompatiblePartitionsError(ArousalCPDError):
    pass


class DriveTooShortError(ArousalCPDError):
    pass


class IngestionError(ArousalCPDError):
    """Raised on malformed drive files; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ArousalCPDError):
    pass


class ZeroVarianceWarning(UserWarning):
    pass


class MissingValueWarning(UserWarning):
    pass
