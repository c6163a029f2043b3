"""Exception hierarchy shared across the package."""


class RWGaussError(Exception):
    """Base class for all errors raised by rwgauss."""


class InputError(RWGaussError, ValueError):
    """Malformed or non-finite input data."""


class DegenerateRayError(RWGaussError, ValueError):
    """A point sits at the apex (zero RW2 norm), so no ray or angle exists."""


class GeometryError(RWGaussError, ValueError):
    """Side lengths violate the triangle inequality beyond tolerance."""


class CoefficientError(RWGaussError, ValueError):
    """Quadratic-form coefficients produce a negative squared distance."""


class SizeError(RWGaussError, ValueError):
    """Problem exceeds the configured size cap of the exact solver."""


class SolverError(RWGaussError, RuntimeError):
    """Exact transport solver failed to terminate."""


class AscentError(RWGaussError, RuntimeError):
    """Stochastic dual ascent diverged.

    Attributes
    ----------
    diagnostics : dict
        Iteration, objective estimate and potential magnitude at failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
