"""thinlim: a numerical laboratory for thin-film limits of supremal and
gradient-constrained energies on convex cross-sections."""

from .errors import (
    AllInfiniteError,
    EmptyDomainError,
    FormatError,
    InfeasibleError,
    NonConvexDomainError,
    OutsideDomainError,
    ThinlimError,
)
from .grids import Grid, GridFunction, read_grid_function, sample_density, write_grid_function
from .geometry import (
    ConvexPolygon,
    Polygon,
    ThinDomain,
    erode_domain,
    regular_polygon,
    unit_square,
)
from .piecewise import AffineFunction, PAFunction, dilate_pa
from .meshing import (
    NodalField,
    SimplicialMesh,
    dilate_nodal,
    extrude_mesh,
    gradient_field,
    nodal_from_function,
    structured_rect_mesh,
    triangulate_polygon,
)
from .envelopes import (
    EnvelopeReport,
    SublevelSet,
    biconjugate,
    biconjugate_via_transforms,
    check_commutation,
    check_envelope_equality_region,
    check_indicator_identity,
    compute_envelope,
    convex_envelope,
    indicator_of_sublevel,
    level_convex_envelope,
    project_inf,
    sublevel_hull,
    validate_coercivity,
)
from .densities import (
    Density,
    DoubleWellRadial,
    ExprDensity,
    GaussianBumps,
    IndicatorDensity,
    NormDensity,
    PlanarVerticalDensity,
    TwoWellPlanarDensity,
    density_from_spec,
)

__version__ = "0.1.0"
