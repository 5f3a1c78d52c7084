"""Shared exception types."""


class SpikeflowError(Exception):
    """Base class for all validation and format errors raised by this package."""


class EventFormatError(SpikeflowError):
    """Raised when an event file cannot be parsed or fails validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(SpikeflowError):
    """Raised when a network or layer configuration is inconsistent."""


class WeightsFormatError(SpikeflowError):
    """Raised when a weights file is corrupt, truncated, or unsupported."""


class FlowExtractionError(SpikeflowError):
    """Raised when a kernel does not admit a flow estimate."""
