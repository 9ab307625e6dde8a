"""Exception hierarchy.

Everything raised on purpose derives from :class:`McptError`; the CLI maps
those to exit code 1 and :class:`InvariantViolation` to exit code 2.
"""

from __future__ import annotations


class McptError(Exception):
    """Base class for input, configuration and state errors."""


class ParseError(McptError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DimensionError(ParseError):
    pass


class ConfigError(McptError):
    pass


class StateError(McptError):
    pass


class InputError(McptError):
    pass


class ValidationError(McptError):
    pass


class StageError(McptError):
    pass


class ArityError(McptError):
    pass


class DegeneracyError(McptError):
    pass


class SingularMatrixError(McptError):
    pass


class PointAtInfinityError(McptError):
    pass


class UndefinedRatioError(McptError):
    pass


class InvariantViolation(Exception):
    """An internal invariant failed; this is a bug, not bad input."""
