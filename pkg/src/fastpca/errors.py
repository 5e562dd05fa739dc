"""Exception types shared across the package."""


class FastPCAError(Exception):
    """Base class for all package errors."""


class ValidationError(FastPCAError, ValueError):
    """An input violated a documented precondition."""


class DiagnosticError(FastPCAError, RuntimeError):
    """A computation degenerated (non-convergence, vanishing iterate, ...)."""


class FormatError(FastPCAError, ValueError):
    """A data file does not match its binary layout.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
