"""Level-set mass transport between planar measures.

Construct the transport x -> phi(x) n(x) between two probability
densities by marching the support function of the nested level-set
family, then evaluate and verify it: change-of-variables residuals,
pushforward statistics, discrete pre-limit matchings, maximum
principles, a Sobolev bound, and the isoperimetric inequality.
"""

from . import analysis, discrete_ot, fields, geometry, pma, transport
from .errors import GaussTransportError
from .fields import DensityField, make_field
from .geometry import ConvexBody, GraphFunction
from .pma import RadialProfile, SupportField, solve_2d, solve_radial
from .transport import TransportMap

__all__ = [
    "analysis",
    "discrete_ot",
    "fields",
    "geometry",
    "pma",
    "transport",
    "GaussTransportError",
    "DensityField",
    "make_field",
    "ConvexBody",
    "GraphFunction",
    "RadialProfile",
    "SupportField",
    "solve_2d",
    "solve_radial",
    "TransportMap",
]
