"""Exception hierarchy. Every numerical failure derives from HolonomyError."""


class HolonomyError(Exception):
    pass


class OutOfDomain(HolonomyError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class MetricDegenerate(HolonomyError):
    pass


class StepTooLarge(HolonomyError):
    pass


class NonClosedCurve(HolonomyError):
    pass


class DimensionMismatch(HolonomyError, ValueError):
    pass


class SingularLinearPart(HolonomyError):
    pass


class SingularFrame(HolonomyError):
    pass


class EmptySample(HolonomyError, ValueError):
    pass


class NonOrthogonalLinearPart(HolonomyError):
    """Linear part of a sampled element drifted off O(m); usually an integration failure."""


class ToleranceAmbiguity(HolonomyError):
    pass


class NoFixedPoint(HolonomyError):
    pass


class ConfigInvalid(HolonomyError, ValueError):
    pass
