"""Exception hierarchy shared by every module."""


class SRTError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SRTError, ValueError):
    pass


class NonFiniteError(SRTError, ArithmeticError):
    pass


class FormatError(SRTError, ValueError):
    """Malformed or unsupported image file."""


class ContainerError(SRTError, ValueError):
    """Malformed, inconsistent or incomplete VITW weight container."""


class LayerError(SRTError, ValueError):
    pass


class ShiftBoundError(SRTError, ValueError):
    pass


class CoverageError(SRTError, ValueError):
    """A pixel or token received no valid sample (shift magnitude too large)."""


class UnsupportedStatisticError(SRTError, ValueError):
    pass


class DegenerateBasisError(SRTError, ValueError):
    def __init__(self, rank: int, message: str | None = None):
        self.rank = rank
        super().__init__(message or f"degenerate basis: covariance has rank {rank} < 3, cannot fit 3 components")
