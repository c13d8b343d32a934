from __future__ import annotations


class MinlagError(Exception):
    """Base class for every error raised by minlag."""


class ConfigError(MinlagError, ValueError):
    pass


class IoFailure(MinlagError, OSError):
    pass


class NumericalAbort(MinlagError):
    """A numerical stage could not produce a trustworthy result."""


class EllipticOrParabolic(NumericalAbort):
    pass


class BudgetExceeded(NumericalAbort):
    pass


class MeshQualityFailure(NumericalAbort):
    pass


class DegenerateMetric(NumericalAbort):
    pass


class TruncationInsufficient(NumericalAbort):
    pass


class ZeroCountMismatch(NumericalAbort):
    pass


class BranchTrackingFailure(NumericalAbort):
    pass


class NewtonDivergence(NumericalAbort):
    pass


class ShorteningStalled(NumericalAbort):
    pass


class NearZeroDenominator(NumericalAbort):
    pass
