"""Exception hierarchy shared by all stokeslab modules."""


class StokesLabError(Exception):
    """Base class for every error raised by stokeslab."""


class InvalidGeometry(StokesLabError, ValueError):
    pass


class DimensionMismatch(StokesLabError, ValueError):
    pass


class IndexOutOfRange(StokesLabError, IndexError):
    pass


class CapacityExceeded(StokesLabError, ValueError):
    pass


class EigensolveFailure(StokesLabError, RuntimeError):
    pass


class ResidualTooLarge(StokesLabError, RuntimeError):
    pass


class NotInSpan(StokesLabError, ValueError):
    pass


class SolveFailure(StokesLabError, RuntimeError):
    pass


class NonUniformSamples(StokesLabError, ValueError):
    pass


class SingularResolvent(StokesLabError, ZeroDivisionError):
    pass


class IllPosed(StokesLabError, ValueError):
    pass


class KernelComponentPresent(StokesLabError, ValueError):
    pass


class BranchCut(StokesLabError, ValueError):
    pass


class ExponentOutOfRange(StokesLabError, ValueError):
    pass


class WindowTooNarrow(StokesLabError, ValueError):
    pass


class ConfigError(StokesLabError, ValueError):
    pass
