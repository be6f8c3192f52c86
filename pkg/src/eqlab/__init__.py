"""Geometry of equipotential surfaces for harmonic potentials.

Closed-form and fitted 3D potentials, level-surface sampling with spectral
quadrature, curvature and field-intensity integrals, and a planar analog.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError,
    ConfigError,
    ConvexityWarning,
    CriticalPoint,
    EqlabError,
    GeometryError,
    IllConditioned,
    NonFinite,
    NonMonotone,
    OriginOutside,
    ResidualTooLarge,
    SingularPoint,
    StencilOutOfDomain,
)
from .fields import (  # noqa: E402
    AxialDipoleField,
    ChargeEnsemble,
    FieldJet,
    MultipoleField,
    eval_jet,
    eval_value,
    field_from_dict,
    field_to_dict,
    load_field,
    make_cavity_green,
    total_flux,
)
from .functionals import identity_suite, level_report, sweep  # noqa: E402
from .geometry import SurfaceFrame, frame  # noqa: E402
from .levelset import GridSpec, LevelSurfaceGrid, flow_trace, radial_solve, sample_surface  # noqa: E402
from .mfs import ConvexShape, FitReport, solve_cavity, solve_exterior  # noqa: E402
