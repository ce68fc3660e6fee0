"""Exception hierarchy shared across tppkit."""


class TPPError(Exception):
    """Base class for all tppkit errors."""


# data
class MissingFile(TPPError, FileNotFoundError):
    pass


class SchemaMismatch(TPPError, ValueError):
    pass


class NonMonotoneTimestamps(TPPError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BadRatios(TPPError, ValueError):
    pass


class EmptyBatch(TPPError, ValueError):
    pass


class EmptyDataset(TPPError, ValueError):
    pass


# hawkes
class TimeBeforeHistory(TPPError, ValueError):
    pass


class ZeroIntensityAtEvent(TPPError, ArithmeticError):
    pass


class ExplosiveParams(TPPError, RuntimeError):
    pass


# autodiff
class ShapeMismatch(TPPError, ValueError):
    pass


class DomainError(TPPError, ArithmeticError):
    pass


class NonScalarLoss(TPPError, ValueError):
    pass


class TapeConsumed(TPPError, RuntimeError):
    pass


# models
class TypeOutOfRange(TPPError, ValueError):
    pass


class SampleTimeBeforeAnchor(TPPError, ValueError):
    pass


# sampler
class MaxRoundsExceeded(TPPError, RuntimeError):
    pass


class AllDrawsCensored(TPPError, RuntimeError):
    pass


# metrics
class NoEvents(TPPError, ValueError):
    pass


class TooLarge(TPPError, ValueError):
    pass


# pipeline
class DivergedLoss(TPPError, FloatingPointError):
    pass


class ConfigError(TPPError, ValueError):
    pass


class IncompatibleCheckpoint(TPPError, ValueError):
    pass
