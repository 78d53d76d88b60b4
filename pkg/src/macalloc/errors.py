"""Exception types raised across the package."""


class MacallocError(Exception):
    """Base class for all package errors."""


class DomainError(MacallocError, ValueError):
    """An argument lies outside the domain of the function."""


class ShapeError(MacallocError, ValueError):
    """Array dimensions disagree with the channel set or model."""


class SizeError(MacallocError, ValueError):
    """A combinatorial guard (orders, subsets, grid size) was exceeded."""


class DegenerateChannelError(MacallocError, ValueError):
    pass


class ChannelFileError(MacallocError, ValueError):
    """Malformed channel file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if field is not None:
                where += f", field {field}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.field = field


class SchemaError(ChannelFileError):
    """File parsed but its contents disagree with the header dimensions."""


class ConstraintError(MacallocError, ValueError):
    pass


class InfeasibleError(MacallocError):
    """No allocation satisfies the requested targets."""

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ConvergenceError(MacallocError):
    """Iterative solver hit its iteration cap.

    ``best`` holds the best iterate found, ``residual`` the final residual.
    """

    def __init__(self, message: str, residual: float = float("nan"), best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class TrainingError(MacallocError):
    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class ConfigError(MacallocError, ValueError):
    pass
