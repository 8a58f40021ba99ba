"""Exception hierarchy shared by the solver modules."""

import numpy as np


class InexactNewtonError(Exception):
    """Base class for all package errors."""


class DimensionError(InexactNewtonError, ValueError):
    """A vector does not match the dimension of the space it is used in."""


class ConfigError(InexactNewtonError, ValueError):
    """Invalid solver or study configuration."""


class DegenerateOperatorError(InexactNewtonError, ArithmeticError):
    """The operator has vanishing norm and cannot be rescaled."""


class NumericalError(InexactNewtonError, ArithmeticError):
    """Non-finite values or a failed linear solve."""


class InnerStallError(InexactNewtonError, RuntimeError):
    """The inner scheme exhausted its iteration or time budget.

    Attributes
    ----------
    best : ndarray or None
        The last increment computed before giving up.
    residual : float
        Linearized residual norm belonging to ``best``.
    """

    def __init__(self, message, best=None, residual=np.nan):
        super().__init__(message)
        self.best = best
        self.residual = residual


class InnerInfeasibleError(InexactNewtonError, RuntimeError):
    """The residual floor ``||P b||`` onto the range complement is at or above ``eta ||b||``.

    In that case no regularization parameter satisfies the inner tolerance.
    """

    def __init__(self, message, floor=np.nan, target=np.nan):
        super().__init__(message)
        self.floor = floor
        self.target = target


class StudyError(InexactNewtonError, RuntimeError):
    """One or more cells of a study did not stop by the discrepancy principle.

    Attributes
    ----------
    failures : list of (delta, seed, stop_reason, message)
    """

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
