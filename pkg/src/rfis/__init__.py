"""Recurrent fractal interpolation surfaces with function vertical scaling."""

from .core import (
    AxisMap,
    RifsSystem,
    build_axis_map,
    build_scale_field,
    build_system,
    check_collinearity_hypothesis,
    connection_matrix,
    corner_mapping_residual,
    is_irreducible,
    stochastic_matrix,
    verify_matching,
)
from .dimension import (
    box_count,
    dimension_bounds,
    empirical_dimension,
    scaling_matrices,
    spectral_radius,
)
from .expr import certify_bounds, evaluate, parse
from .grid import (
    DomainLayout,
    DomainSpec,
    GridData,
    build_grid,
    certify_uniform,
    normalize,
    tau,
    tau_inverse,
    validate_layout,
)
from .render import (
    RasterOperator,
    SurfaceSample,
    chaos_game,
    deterministic_render,
    max_variation,
    vertical_range,
)

__version__ = "0.1.0"
