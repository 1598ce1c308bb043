"""Exception hierarchy shared by every stage of the pipeline."""


class SkyError(Exception):
    """Base class for all errors raised by skyghi."""


# imaging
class MalformedHeader(SkyError, ValueError):
    pass


class UnsupportedMaxval(SkyError, ValueError):
    pass


class TruncatedPixelData(SkyError, ValueError):
    pass


class IoFailure(SkyError, OSError):
    pass


class DimensionMismatch(SkyError, ValueError):
    pass


# clustering / features / metrics
class InsufficientData(SkyError, ValueError):
    pass


class EmptySet(SkyError, ValueError):
    pass


class EmptyMatrix(SkyError, ValueError):
    pass


class LengthMismatch(SkyError, ValueError):
    pass


class ZeroVariance(SkyError, ValueError):
    pass


class TooFewRows(SkyError, ValueError):
    pass


# neural network / optimizers
class DegenerateBatch(SkyError, ValueError):
    pass


class StaleCache(SkyError, RuntimeError):
    pass


class InvalidDistribution(SkyError, ValueError):
    pass


class NonFiniteGradient(SkyError, FloatingPointError):
    pass


class NonFiniteObjective(SkyError, FloatingPointError):
    pass


class LineSearchFailure(SkyError, RuntimeError):
    pass


# models
class SingleClassData(SkyError, ValueError):
    pass


class UntrainedModel(SkyError, RuntimeError):
    pass


# synthetic scenes
class UnreachableCoverage(SkyError, ValueError):
    pass


# files
class MissingHeader(SkyError, ValueError):
    pass


class MalformedRow(SkyError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class BadMagic(SkyError, ValueError):
    pass


class UnsupportedVersion(SkyError, ValueError):
    pass


class CorruptSection(SkyError, ValueError):
    pass


class UsageError(SkyError):
    pass
