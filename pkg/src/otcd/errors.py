"""Exception types raised across the toolkit."""


class OTCDError(Exception):
    """Base class for all errors raised by this package."""


class EmptyVector(OTCDError):
    """A vector input is empty or carries no mass."""


class NegativeEntry(OTCDError):
    """A nonnegative input contains a negative entry."""


class NonFiniteEntry(OTCDError):
    """An input contains NaN or infinity."""


class DimensionMismatch(OTCDError):
    """Shapes of the inputs do not agree."""


class ExponentOverflow(OTCDError):
    """An exponent exceeds the safe double-precision range (> 700)."""


class IndexOutOfRange(OTCDError):
    """A coordinate index is outside the valid range."""


class EpsPrimeOutOfRange(OTCDError):
    """Marginal smoothing parameter outside (0, 8]."""


class UnsortedSupport(OTCDError):
    """A 1-D support vector is not strictly increasing."""


class MaxItersExceeded(OTCDError):
    """Iteration budget exhausted before the stopping rule fired.

    Carries the partial solve report in ``report``.
    """

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class DisconnectedGraph(OTCDError):
    """The agent graph is not connected (or has fewer than two nodes)."""


class SelfLoop(OTCDError):
    """The agent graph contains a self-loop."""


class NeighborAccessViolation(OTCDError):
    """An agent tried to read a gradient from a non-neighbor."""


class NonPositiveDistance(OTCDError):
    """Competitive ratio requires strictly positive distances."""


class BadMagic(OTCDError):
    """An IDX container does not start with the expected magic number."""


class TruncatedFile(OTCDError):
    """An IDX container ends before the declared payload."""
