"""Exception types shared across the package.

Plain ValueError is used for ordinary precondition violations (bad ranges,
malformed arguments); the classes here mark failures that callers and the CLI
treat differently.
"""


class EdgelatError(Exception):
    """Base class for package-specific failures."""


class ConfigError(EdgelatError):
    """Invalid configuration: unknown keys, missing fields, impossible setups."""


class CalibrationError(ConfigError):
    """A synthetic device pool target cannot be reached (e.g. below overhead)."""


class DataFormatError(EdgelatError):
    """A dataset/model/report file does not conform to its format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReferentialError(DataFormatError):
    """File parses but refers to unknown entities or violates uniqueness."""
