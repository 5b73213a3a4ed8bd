"""Exception types raised across the package."""


class FBMAError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FBMAError, ValueError):
    """Invalid grid, problem, or run configuration."""


class RankError(FBMAError, ValueError):
    """Degenerate (rank-deficient) geometric input."""


class SingularDataError(FBMAError):
    """Weierstrass data hits a pole or zero where it must not."""


class DegenerateCurveError(FBMAError, ValueError):
    """Curve input that cannot carry Frenet data."""


class NotCertifiableError(FBMAError):
    """Hypotheses of the orthogonal-sphere certifier fail."""


class InconsistencyError(FBMAError):
    """Two routes that must agree do not."""


class ConvergenceError(FBMAError):
    """A nonlinear solve diverged or hit its iteration cap."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class OverflowGuardError(ConvergenceError):
    """The iterate left the range where exp(v) is representable."""


class IllConditionedError(FBMAError, ValueError):
    """Evaluation point too close to a contour or singularity."""
