"""Exception hierarchy shared by all yfs modules."""


class YFSError(Exception):
    """Base class for every error raised by the package."""


class DomainError(YFSError, ValueError):
    """An argument lies outside the admissible parameter domain."""


class OscillatoryRegime(YFSError):
    """beta < beta0: the characteristic roots are complex."""


class DegenerateRoots(YFSError):
    """beta == beta0: the two characteristic exponents coincide."""


class EmptyRegime(YFSError):
    """The requested parameter interval contains no admissible beta."""


class NotApplicable(YFSError):
    """The requested check does not apply to this regime or profile."""


class ShootingFailure(YFSError):
    """An ODE integration for a profile failed (blow-up, zero crossing, ...)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class OrbitError(YFSError):
    """A phase-plane orbit ended at the wrong critical point."""


class WindowError(YFSError):
    """The tail deviation changes sign inside the fit window."""


class ConstructionError(YFSError):
    """Assembled initial data violate the requested ordering."""


class StepError(YFSError):
    """Newton iteration of an implicit time step failed to converge."""


class Inconclusive(YFSError):
    """A fit could not be performed on the supplied samples."""
