"""Exception and warning types raised across eqlab."""


class EqlabError(Exception):
    """Base class for all eqlab errors."""


class SingularPoint(EqlabError):
    """Evaluation point coincides with a source singularity."""


class GeometryError(EqlabError):
    """Invalid geometric configuration (e.g. origin outside a cavity)."""


class CriticalPoint(EqlabError):
    """Field intensity is too small to define a level-set frame."""


class BracketError(EqlabError):
    """Radial search interval does not bracket the requested level."""


class NonFinite(EqlabError):
    """An integrand or derived quantity is NaN or infinite."""


class StencilOutOfDomain(EqlabError):
    """A finite-difference stencil would touch a field singularity."""


class IllConditioned(EqlabError):
    """Least-squares system exceeds the conditioning cap."""


class ResidualTooLarge(EqlabError):
    """Fitted field misses its boundary condition by more than the cap."""


class OriginOutside(GeometryError):
    """Cavity origin is not strictly inside the boundary shape."""


class ConfigError(EqlabError):
    """Run configuration failed validation."""


class NonMonotone(UserWarning):
    """Newton polish left the bracket; pure bisection was used instead."""


class ConvexityWarning(UserWarning):
    """A sampled level surface has nodes with K <= 0 or H >= 0."""
