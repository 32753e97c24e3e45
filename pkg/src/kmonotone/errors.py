"""Exception hierarchy shared by the library and the CLI."""


class KMonotoneError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(KMonotoneError, ValueError):
    """An argument violates a documented precondition."""


class NotKMonotoneError(KMonotoneError, ValueError):
    """A distribution expected to be k-monotone is not.

    Attributes
    ----------
    indices : list of int
        Indices ``j`` where the k-th difference falls below the tolerance.
    """

    def __init__(self, k, indices):
        self.k = k
        self.indices = list(indices)
        super().__init__(f"distribution is not {k}-monotone; violations at j={self.indices}")


class InvalidConstructionError(KMonotoneError, ValueError):
    """An abundance distribution cannot be built from the given input."""


class EmptySampleError(KMonotoneError, ValueError):
    """A sample holds no observations."""


class DegenerateSupportError(KMonotoneError, ValueError):
    """The (effective) support is reduced to ``{0}``; no constraint can be tested."""


class CalibrationError(KMonotoneError, RuntimeError):
    """A Monte-Carlo or bootstrap calibration could not bracket the level."""


class InapplicableOrderError(KMonotoneError, ValueError):
    """The empirical estimator of N cannot be used at this order.

    Attributes
    ----------
    k : int
    offending_sum : float
        Value of ``sum_h (-1)^h C(k, h) S_h``; must be <= 0.
    """

    def __init__(self, k, offending_sum):
        self.k = k
        self.offending_sum = offending_sum
        super().__init__(
            f"order k={k} is inapplicable: sum_h (-1)^h C(k,h) S_h = {offending_sum:g} > 0"
        )


class SolverError(KMonotoneError, RuntimeError):
    """The constrained least-squares solver did not converge.

    Attributes
    ----------
    best : numpy.ndarray
        Best iterate reached before giving up.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)
