"""Exception hierarchy for the slidetouch package.

Every failure mode named in a module contract gets its own class so callers
can catch precisely, and the CLI can map abort reasons to exit codes.
"""


class SlidetouchError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(SlidetouchError, ValueError):
    """An argument violates an operation's contract (non-finite point, empty cloud, ...)."""


class DegenerateNormalError(SlidetouchError):
    """Field gradient too small to define a surface normal (e.g. exact box center)."""


class NumericError(SlidetouchError):
    """A numeric procedure failed; carries diagnostic detail.

    ``detail`` holds the offending grid node index for field sampling, or a
    conditioning estimate for a failed factorization.
    """

    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.detail = detail


class EmptyViewError(SlidetouchError):
    """A rendered camera view contains no surface hits."""


class DegenerateGeometryError(SlidetouchError):
    """Point set too flat/small to anchor an implicit-surface fit."""


class EmptySurfaceError(SlidetouchError):
    """Posterior mean has no zero crossing inside the requested bounds."""


class ContactLostError(SlidetouchError):
    """Tactile servo lost contact for too many consecutive iterations."""


class ApproachFailedError(SlidetouchError):
    """No surface found near the requested approach point."""


class TouchFailedError(SlidetouchError):
    """A sliding touch lost contact before recording a single frame."""


class DegenerateDirectionError(SlidetouchError):
    """Sliding direction undefined: target offset parallel to the surface normal."""


class InvalidConfigurationError(SlidetouchError):
    """A configuration value makes an operation ill-posed (e.g. zero Jacobian entry)."""


class ConfigError(SlidetouchError):
    """Scene or run configuration failed to parse; names the offending field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
