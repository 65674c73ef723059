"""Exception hierarchy shared by all modules."""


class ProjInfError(Exception):
    """Base class for every error raised by this package."""


class NotPsd(ProjInfError):
    pass


class NonFinite(ProjInfError):
    pass


class DimMismatch(ProjInfError, ValueError):
    pass


class NonPositiveLambda(ProjInfError, ValueError):
    pass


class ZeroRank(ProjInfError):
    pass


class CapExceeded(ProjInfError):
    pass


class InvalidSpec(ProjInfError, ValueError):
    pass


class FamilyMismatch(ProjInfError):
    pass


class NumericalBreakdown(ProjInfError):
    pass


class OutOfRangeParam(ProjInfError, ValueError):
    pass


class LambdaTooLarge(ProjInfError, ValueError):
    pass


class Unsupported(ProjInfError):
    pass


class RegimeViolation(ProjInfError):
    pass


class CalibrationFailed(ProjInfError):
    pass


class FormatError(ProjInfError):
    """Malformed GRDF/KFCF payload."""
