from typing import Optional


class JumpGameException(Exception):
    """Base exception of the package."""


class ModelFormatError(JumpGameException):
    """Model file could not be parsed.

    Args:
        message: What went wrong.
        path: JSON path of the offending value, e.g. ``dynamics[1].s0.q``.
        line: Line number for syntax errors, if known.
    """

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DimensionError(ModelFormatError):
    pass


class UnknownReferenceError(ModelFormatError):
    pass


class PolicyFormatError(JumpGameException):
    pass


class GridMismatchError(JumpGameException):
    pass


class NonFiniteError(JumpGameException):
    pass


class SaddleResidualError(JumpGameException):
    pass


class ConvergenceError(JumpGameException):
    """Value iteration ran out of iterations.

    The last iterate and the diagnostics are kept so that callers
    can still write partial outputs.
    """

    def __init__(self, message: str, values=None, diagnostics=None):
        super().__init__(message)
        self.values = values
        self.diagnostics = diagnostics


class UsageError(JumpGameException):
    """Command line could not be parsed."""
