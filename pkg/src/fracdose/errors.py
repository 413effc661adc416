"""Exception hierarchy shared across the package."""


class FracdoseError(Exception):
    """Base class for all package errors."""


class PoleError(FracdoseError, ValueError):
    """Argument sits on a pole (Gamma at a non-positive integer, transfer function zero denominator)."""


class ConvergenceError(FracdoseError, ArithmeticError):
    """An iterative or series evaluation did not reach its tolerance."""


class RegimeError(FracdoseError, ValueError):
    """An approximation was requested outside the argument range where it is valid."""


class MassBalanceError(FracdoseError, ValueError):
    """A compartment model uses different orders for the two ends of one transfer."""


class UnitError(FracdoseError, ValueError):
    """A rate constant's declared units do not match its fractional order."""


class InfeasibleError(FracdoseError, ValueError):
    """A dosing problem has no feasible point (typically the initial state violates a bound)."""


class NumericalError(FracdoseError, ArithmeticError):
    """A simulation produced non-finite values."""
