"""Exception hierarchy.

Every error raised by the library derives from :class:`GaussQCError`. The CLI
maps the three subfamilies onto exit codes: :class:`InputError` (3),
:class:`ModelError` (4) and :class:`ConvergenceError` (5).
"""


class GaussQCError(Exception):
    """Base class for all library errors."""


class InputError(GaussQCError, ValueError):
    """Malformed or contract-violating input."""


class ModelError(GaussQCError, ArithmeticError):
    """Data or parameters incompatible with the two-beam Gaussian model."""


class ConvergenceError(GaussQCError):
    """An iterative procedure stopped before meeting its tolerance."""


# -- input ------------------------------------------------------------------

class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyData(InputError):
    pass


class InvalidN(InputError):
    pass


class BadEfficiency(InputError):
    pass


class BadModeCount(InputError):
    pass


# -- model ------------------------------------------------------------------

class DegenerateVariance(ModelError):
    pass


class NonPhysicalMoments(ModelError):
    """Moment table implies negative squared moduli. ``invariants`` keeps the
    offending values for diagnostics."""

    def __init__(self, message, invariants=None):
        super().__init__(message)
        self.invariants = invariants


class NegativeDiscriminant(ModelError):
    pass


class Unphysical(ModelError):
    pass


class SamplingExhausted(ModelError):
    pass


class NonPositiveDeterminant(ModelError):
    """``which`` names the failing determinant ("global", "beam1", "beam2")."""

    def __init__(self, which, value):
        super().__init__(f"det sigma ({which}) = {value!r} is not positive")
        self.which = which
        self.value = value


class DomainError(ModelError):
    pass


class NegativeCSquared(ModelError):
    def __init__(self, value):
        super().__init__(f"|C|^2 estimate {value!r} is negative")
        self.value = value


class ZeroMean(ModelError):
    pass


class InvertedBracket(ModelError):
    pass


class InsufficientGrid(ModelError):
    pass


# -- convergence --------------------------------------------------------------

class NoConvergence(ConvergenceError):
    pass


class NoConvergenceWarning(RuntimeWarning):
    pass
