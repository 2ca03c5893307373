"""Exception hierarchy shared by all modules."""


class SJEError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(SJEError, ValueError):
    """An input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """A file does not conform to its line-oriented format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class ZeroShotLeakError(ValidationError):
    """A sample from a held-out test class reached the training path."""
