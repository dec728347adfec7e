"""Exception types raised across the package.

Validation-type failures derive from :class:`ValidationError`, numerical
failures from :class:`NumericalError`. The CLI maps them to exit codes 2 and 3.
"""


class QuasiError(Exception):
    """Base class for all package errors."""


class ValidationError(QuasiError, ValueError):
    """Invalid user input."""


class NumericalError(QuasiError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


# arithmetic
class RationalInput(ValidationError):
    """The continued fraction terminated: the input is rational at working precision."""


class LiouvilleLike(NumericalError):
    """Fitted Diophantine exponent exceeds the configured ceiling."""

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


# operators
class ZeroCoupling(ValidationError):
    """Rescaled dual normalization requested with zero coupling."""


class IllConditioned(NumericalError):
    """Interpolation residual above tolerance."""


class SingularRestriction(NumericalError):
    """The restricted matrix is numerically singular."""


class ConvergenceFailure(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


# cocycles
class Overflow(NumericalError):
    """Matrix product entries exceeded the overflow guard."""


class NonzeroDegree(ValidationError):
    """Rotation number requested for a cocycle that is not homotopic to the identity."""


class DegenerateMap(NumericalError):
    """Matrix map is (numerically) singular somewhere on the circle."""


class Inconclusive(NumericalError):
    """Semi-decision procedure could not decide at the given horizon."""


class StripSingularity(NumericalError):
    """Conjugating map is (numerically) singular on the strip."""


# spectral
class FlatWindow(NumericalError):
    """All IDS increments below counting resolution."""


# duality
class NoCandidate(NumericalError):
    """No dual eigenvalue close enough to the requested energy."""


class FloorCollapse(NumericalError):
    """Bloch wave norm collapsed on the strip."""


class SmallDivisor(NumericalError):
    """Cohomological equation hit divisors below the floor."""

    def __init__(self, modes, divisors=None):
        modes = tuple(int(k) for k in modes)
        super().__init__(f"small divisors at modes {list(modes)}")
        self.modes = modes
        self.divisors = divisors


class DeterminantFloor(NumericalError):
    """Determinant of the real column matrix too close to zero."""


class CaseAmbiguous(NumericalError):
    """Case split of the localized reduction could not be decided."""

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or {}


# diagnostics
class WindowEmpty(NumericalError):
    """No inter-resonance window long enough to fit a decay rate."""


class CoincidentNodes(ValidationError):
    """Interpolation nodes are (numerically) coincident."""


class DegreeTooHigh(ValidationError):
    """Trigonometric polynomial degree exceeds the admissible bound."""
