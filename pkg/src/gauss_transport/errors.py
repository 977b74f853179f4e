"""Exception hierarchy.

Operational failures (bad input, solver abort, degenerate geometry) all
derive from GaussTransportError so the CLI can map them to a single exit
code.  Verification failures are reported through return values, not
exceptions.
"""


class GaussTransportError(Exception):
    """Base class for operational errors."""


class OriginNotInteriorError(GaussTransportError):
    """A support value is nonpositive, so the origin is not interior."""


class DegenerateCurvatureError(GaussTransportError):
    """h + h_thetatheta fell below the curvature floor (flat spot)."""


class ChartRangeError(GaussTransportError):
    """Requested normal is too close to the graph-chart equator."""


class OutOfDomainError(GaussTransportError):
    """Point lies outside the density's domain."""


class NotRadialError(GaussTransportError):
    """Operation requires a radially symmetric density on a ball."""


class NonintegrableSingularityError(GaussTransportError):
    """Radial power exponent at or below -d cannot be normalized."""


class RejectionStallError(GaussTransportError):
    """Rejection sampler acceptance rate collapsed (misconfigured domain)."""


class ConvexityLossError(GaussTransportError):
    """Too many grid nodes lost convexity during the march."""


class DomainEscapeError(GaussTransportError):
    """Inverse-map points left the source body by more than tolerance."""


class OutOfRangeError(GaussTransportError):
    """Query point is outside the solved annulus of level sets."""


class AmbiguousNormalError(GaussTransportError):
    """Two well-separated angles maximize the support gap (flat facet)."""


class SizeLimitError(GaussTransportError):
    """Assignment instance exceeds the exact-solver size limit."""


class WrongTargetDensityError(GaussTransportError):
    """Checker requires a specific target density kind."""


class EmptyLevelError(GaussTransportError):
    """A requested sublevel set has empty interior."""


class SectorGeometryError(GaussTransportError):
    """Sector does not keep positive distance from the equator."""


class ConfigError(GaussTransportError):
    """Problem configuration is malformed or inconsistent."""
