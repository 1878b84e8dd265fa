"""Exception types shared across the solver."""


class CharfemError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CharfemError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class OutOfDomainError(CharfemError):
    """A point (or the image of an element) lies outside the domain."""


class SingularGeometryError(CharfemError):
    """A mesh element is degenerate (zero or negative area)."""


class SingularMapError(CharfemError):
    """An affine map is not invertible."""


class AdmissibilityError(CharfemError):
    """The CFL-like step condition was violated in strict mode.

    Carries the offending report in ``report`` and, when raised from a time
    loop, the step index in ``step``.
    """

    def __init__(self, msg, report=None, step=None):
        super().__init__(msg)
        self.report = report
        self.step = step


class GeometryConsistencyError(CharfemError):
    """Clipped polygons failed to partition a source element."""


class SolverFailureError(CharfemError):
    """The linear solver produced an unusable solution."""

    def __init__(self, msg, diagnostic=None):
        super().__init__(msg)
        self.diagnostic = diagnostic


class DegenerateExactSolutionError(CharfemError):
    """A relative error is undefined because the reference norm vanishes."""


class StepRejectedError(AdmissibilityError):
    """A time loop aborted; ``history`` holds the partial run."""

    def __init__(self, msg, report=None, step=None, history=None):
        super().__init__(msg, report=report, step=step)
        self.history = history


class ConfigError(CharfemError):
    """A run configuration file or CLI invocation is invalid."""
