"""Exception types raised by the solvers and I/O layers."""


class G2DuctError(Exception):
    """Base class for all package errors."""


class GeometryError(G2DuctError, ValueError):
    pass


class MeshFormatError(G2DuctError, ValueError):
    pass


class ConfigError(G2DuctError, ValueError):
    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.message = message
        self.field = field
        self.line = line


class NonConvergence(G2DuctError, RuntimeError):
    """An iteration hit its cap or blew up; ``history`` holds the residuals."""

    def __init__(self, message, history=None, state=None):
        super().__init__(message)
        self.history = list(history or [])
        self.state = state


class IncompatibleBoundaryData(G2DuctError, ValueError):
    pass


class SingularMatrix(G2DuctError, RuntimeError):
    pass


class SingularTransport(SingularMatrix):
    pass


class ParameterMismatch(G2DuctError, ValueError):
    pass


class DegenerateDifferences(G2DuctError, ZeroDivisionError):
    pass


class ParallelLines(G2DuctError, ValueError):
    pass


class InsufficientSpan(G2DuctError, ValueError):
    pass


class RankDeficient(G2DuctError, ValueError):
    pass
