"""Exception hierarchy shared by every mcseg module."""


class McsegError(Exception):
    """Base class for all mcseg errors."""


class UnreadableFile(McsegError):
    pass


class UnsupportedFormat(McsegError):
    pass


class WriteFailure(McsegError):
    pass


class DimensionMismatch(McsegError, ValueError):
    pass


class EmptyMask(McsegError, ValueError):
    pass


class MarkerExceedsMask(McsegError, ValueError):
    pass


class EmptyMarkers(McsegError, ValueError):
    pass


class AllForeground(McsegError, ValueError):
    pass


class NoTissue(McsegError):
    """Breast mask is empty or too small to be tissue."""


class TooManyLevels(McsegError, ValueError):
    pass


class InconsistentPyramid(McsegError, ValueError):
    pass


class GainLengthMismatch(McsegError, ValueError):
    pass


class TooFewSamples(McsegError):
    pass


class DegenerateFit(McsegError):
    """Two-Gaussian fit collapsed onto a single population."""


class NoForegroundMarkers(McsegError):
    """No suspicious regions; callers report an empty segmentation."""


class SpecInfeasible(McsegError, ValueError):
    pass


class ConfigError(McsegError, ValueError):
    pass
