"""Exception hierarchy shared by all modules."""


class AmpleSawtoothError(Exception):
    """Base class for every error raised by this package."""


class DomainMembershipError(AmpleSawtoothError, ValueError):
    """A point that should lie inside a domain does not."""


class GeometryError(AmpleSawtoothError):
    """A geometric construction is infeasible.

    ``achievable`` carries the best value that could be attained, when the
    construction has a tunable parameter (for instance the corkscrew constant).
    """

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class GridRangeError(AmpleSawtoothError, ValueError):
    """Requested grid depth or dimension outside the supported range."""


class DriftBoundError(AmpleSawtoothError, ValueError):
    """A drift field violates the pointwise bound |B| <= M / delta."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class QuadratureError(AmpleSawtoothError):
    """Box quadrature did not reach the requested accuracy."""


class ConstructionError(AmpleSawtoothError):
    """The stopping-time construction violated one of its guarantees."""


class SchemeError(AmpleSawtoothError):
    """The finite-difference scheme lost the M-matrix property."""


class UnsupportedError(AmpleSawtoothError, NotImplementedError):
    """Operation not available for the requested dimension or domain kind."""


class PreconditionError(AmpleSawtoothError, ValueError):
    """A check was asked to run outside the regime where its claim applies."""
