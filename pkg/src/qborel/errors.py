"""Exception hierarchy shared by every qborel module."""


class QBorelError(Exception):
    """Base class for all engine errors."""


class TermCountError(QBorelError):
    """A q-power combination grew past the allowed number of terms."""


class NoPowerSeriesSolution(QBorelError):
    pass


class Resonance(QBorelError):
    """The recurrence multiplier vanishes, so a coefficient is undetermined."""

    def __init__(self, degree, multiplier=None):
        self.degree = degree
        self.multiplier = multiplier
        super().__init__(f"resonant recurrence at degree {degree} (multiplier {multiplier!r})")


class OperatorSyntaxError(QBorelError, SyntaxError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class SlopeMismatch(QBorelError):
    pass


class NoPositiveSlope(QBorelError):
    pass


class NearZeroTheta(QBorelError, ArithmeticError):
    pass


class EmptyDomain(QBorelError):
    pass


class BadDirection(QBorelError):
    def __init__(self, index, message="", stage=None):
        self.index = index
        self.stage = stage
        super().__init__(message or f"leading coefficient vanishes at spiral index {index}")


class SeedTooShort(QBorelError):
    pass


class NearPole(QBorelError, ArithmeticError):
    pass


class NotCertified(QBorelError):
    pass


class TruncationNotConverged(QBorelError):
    pass


class InsufficientPoints(QBorelError):
    pass


class SingularGauge(QBorelError, ArithmeticError):
    pass


class DegenerateGauge(QBorelError):
    pass


class ResonantSpectrum(QBorelError):
    pass
