"""Exception types raised across the package."""


class MTFlowError(Exception):
    """Base class for all package errors."""


class GridError(MTFlowError, ValueError):
    """Invalid grid construction parameters or an empty domain."""


class GridMismatch(MTFlowError, ValueError):
    """Two objects that must share a grid do not."""


class BoundaryFlagError(MTFlowError, ValueError):
    """A zero-boundary field was required but not supplied."""


class BlowupOverflow(MTFlowError, ArithmeticError):
    """Some node has u^2 beyond the exponentiation guard."""


class DegenerateState(MTFlowError, ValueError):
    """The field vanishes where a quotient needs it not to."""


class NotApplicable(MTFlowError, ValueError):
    """The requested quantity is not defined for this constraint."""


class SolverError(MTFlowError, RuntimeError):
    """A linear solve or scalar root-find failed to converge."""


class BracketError(SolverError):
    """A root bracket does not contain a sign change."""


class UnderResolved(MTFlowError, ValueError):
    """A bubble scale is below the grid resolution."""


class ConfigError(MTFlowError, ValueError):
    """A scenario config failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
