"""Exception hierarchy shared by all pnkit modules."""


class PnkitError(Exception):
    """Base class for every error raised by pnkit."""


class DomainError(PnkitError, ValueError):
    """An argument lies outside the mathematical domain of a routine."""


class UnsupportedError(PnkitError, NotImplementedError):
    """The requested combination of geometry and scheme is not provided."""


class SymmetrizationError(PnkitError, ArithmeticError):
    """A flux matrix could not be symmetrized by the given diagonal."""


class DegenerateSystemError(PnkitError, ArithmeticError):
    """The steady operator is singular by construction (no absorption, no shift)."""


class SingularSystemError(PnkitError, ArithmeticError):
    """Sparse LU factorization broke down on an exactly singular pivot."""


class SolveAccuracyError(PnkitError, ArithmeticError):
    """A direct solve returned a residual above the accepted tolerance."""

    def __init__(self, residual, tolerance):
        super().__init__(f"relative residual {residual:.3e} exceeds {tolerance:.1e}")
        self.residual = residual
        self.tolerance = tolerance


class ConfigError(PnkitError, ValueError):
    """An experiment configuration failed validation."""
