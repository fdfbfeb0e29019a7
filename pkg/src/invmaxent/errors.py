"""Exception hierarchy.

Every error raised by the library derives from :class:`InvMaxEntError`, and
carries the witness needed to diagnose it (a point, a column, a position).
The CLI maps the three families below onto exit codes.
"""


class InvMaxEntError(Exception):
    """Base class for all library errors."""


class ValidationError(InvMaxEntError, ValueError):
    """Bad input: shapes, dimensions, malformed files or expressions."""


class NumericalError(InvMaxEntError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer."""


class VerificationError(InvMaxEntError, AssertionError):
    """A mathematical certificate failed to hold."""


# -- group_core --------------------------------------------------------------

class NonInvertibleGenerator(ValidationError):
    pass


class OrderBoundExceeded(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class SpaceMismatch(ValidationError):
    pass


class OddL(ValidationError):
    pass


class SpaceNotInvariant(ValidationError):
    def __init__(self, element, point):
        self.element = element
        self.point = point
        super().__init__(
            f"element {element!r} maps lattice point {point} outside the lattice")


# -- polynomials / invariants ------------------------------------------------

class PolySyntaxError(ValidationError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class UnknownVariable(ValidationError):
    pass


class ArityMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyA(ValidationError):
    pass


class SignatureCollision(VerificationError):
    def __init__(self, orbit1, orbit2):
        self.orbits = (orbit1, orbit2)
        super().__init__(
            f"orbits {orbit1} and {orbit2} share a generator signature; "
            "the generator set does not separate orbits")


# -- maxent ------------------------------------------------------------------

class ShapeMismatch(ValidationError):
    pass


class AbsoluteContinuityViolation(ValidationError):
    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"q vanishes at cell {cell} where p is positive")


class RankDeficient(ValidationError):
    def __init__(self, column, term=None):
        self.column = column
        self.term = term
        what = f"column {column}" if term is None else f"column {column} ({term})"
        super().__init__(f"{what} is linearly dependent on the preceding columns")


class NotRealizable(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


# -- builder -----------------------------------------------------------------

class InsufficientRank(ValidationError):
    pass


class HaltingViolation(VerificationError):
    pass


# -- imagery -----------------------------------------------------------------

class ParseError(ValidationError):
    pass


class TruncatedFile(ParseError):
    pass


class BadDimensions(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


class EmptyList(ValidationError):
    pass


class InconsistentK(ValidationError):
    pass
