"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class VismapError(Exception):
    exit_code = 1


class ConfigError(VismapError):
    """Invalid run configuration or inconsistent user input."""

    exit_code = 2


class ParseError(VismapError):
    """Malformed text input (.smv, portable scene/field headers)."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class FormatError(ParseError):
    """Malformed binary input (.sf records, portable field payload)."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        Exception.__init__(self, message)
        self.offset = offset
        self.line = None


class ComputeError(VismapError):
    """Violated computational precondition (shapes, coverage, placement)."""

    exit_code = 4


class OutputError(VismapError):
    """Failure while writing result artifacts."""

    exit_code = 5
