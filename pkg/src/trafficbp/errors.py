"""Exception types and diagnostic records shared across the package."""

from dataclasses import dataclass


class TrafficBpError(Exception):
    """Base class for all package errors."""


class ParameterError(TrafficBpError):
    """Invalid argument or violated operation precondition."""


class DataError(TrafficBpError):
    """Input data is structurally readable but semantically unusable."""


class CapacityError(TrafficBpError):
    """Problem size exceeds a hard implementation cap."""


class FileFormatError(TrafficBpError):
    """Malformed input file; carries file, line and field context."""

    def __init__(self, path, message, line=None, field=None):
        self.path = str(path)
        self.line = line
        self.field = field
        loc = self.path
        if line is not None:
            loc += f", line {line}"
        if field is not None:
            loc += f", field {field!r}"
        super().__init__(f"{loc}: {message}")


@dataclass(frozen=True)
class Diagnostic:
    """One finding from a validate_* report. Severity is 'error' or 'warning'."""

    code: str
    severity: str
    message: str
