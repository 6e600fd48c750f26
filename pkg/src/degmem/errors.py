"""Exception hierarchy shared by all modules."""


class DegmemError(Exception):
    """Base class for every error raised by this package."""


class InvalidDegeneracyError(DegmemError, ValueError):
    """Degeneracy exponent or side declaration is outside the admissible range."""


class DivergentIntegralError(DegmemError, ArithmeticError):
    """A singular integral does not converge under geometric refinement."""


class DegenerateFieldError(DegmemError, ValueError):
    """A ratio was requested for a field with vanishing energy."""


class WeightAdmissibilityError(DegmemError, ValueError):
    """Weight parameters violate the admissibility window."""


class EmptyWindowError(WeightAdmissibilityError):
    """The admissible window for gamma is empty."""


class ConfigurationError(DegmemError, ValueError):
    """Inconsistent solver configuration (grid, boundary conditions, ...)."""


class GeometryError(DegmemError, ValueError):
    """No room for the nested intervals required by the gluing construction."""


class ConvergenceError(DegmemError, RuntimeError):
    """An iterative method did not reach its tolerance.

    Parameters
    ----------
    message : str
    history : list of float
        Residual history up to the failure.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class RadiusError(ConvergenceError):
    """An iterate left the ball E_{s,k,R} of the fixed-point map."""


class KernelInadmissibleError(DegmemError, ValueError):
    """The memory kernel fails the decay hypothesis at the final time."""
