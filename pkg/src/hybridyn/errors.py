"""Exception and warning types shared across the package."""


class HybridError(Exception):
    """Base class for all errors raised by hybridyn."""


class TruncationError(HybridError):
    pass


class DegreeError(HybridError):
    pass


class BoundaryLeakError(HybridError):
    pass


class DomainTooSmall(HybridError):
    pass


class NormalizationError(HybridError):
    pass


class UnsupportedPoint(HybridError):
    pass


class StabilityError(HybridError):
    pass


class IllPosedError(HybridError):
    pass


class NonGaussianInitial(HybridError):
    pass


class ConfigError(HybridError):
    pass


class PeakOverlapWarning(UserWarning):
    pass


class PositivityWarning(UserWarning):
    pass


class IoError(HybridError, OSError):
    pass
