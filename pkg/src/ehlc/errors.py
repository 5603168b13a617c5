"""Exception types shared across solvers, oracles and the CLI."""


class EhlcError(Exception):
    """Base class for all package errors."""


class DrainBeyondPeak(EhlcError):
    """Battery drain rate exceeds the point of maximum delivered power."""


class InfeasibleDelivery(EhlcError):
    """No drain rate can deliver the requested power through the battery."""


class NoFeasibleTransmission(EhlcError):
    """Energy is present but no positive-rate transmission is possible."""


class SolverDidNotConverge(EhlcError):
    """An iterative solver hit its iteration cap before meeting tolerance."""

    def __init__(self, msg, iterations=None, residual=None):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


class NoRootInBracket(EhlcError):
    """A sign scan found no bracket for a root the solver requires."""

    def __init__(self, msg, scanned=None):
        super().__init__(msg)
        self.scanned = scanned


class BudgetExceeded(EhlcError):
    """A grid search would exceed its configured evaluation budget."""


class ConfigInvalid(EhlcError):
    """An experiment config failed validation.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field
