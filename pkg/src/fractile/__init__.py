"""Spectral construction of fractional semilinear ground states on
fundamental domains, with reflection tilings into periodic, sign-changing,
quasi-periodic, breather-type, and radial structures."""

__version__ = "0.1.0"

from .domain import (
    DomainError,
    DomainSpec,
    Grid,
    SymmetryGroup,
    build_grid,
    fundamental_mask,
    symmetry_group,
)
from .spectral import (
    BoundaryCondition,
    Field,
    SpectralError,
    SpectralSymbol,
    apply_fraclap,
    norms,
    seminorm_sq,
    support_separation_defect,
    symbol,
)
from .energy import EnergyError, EnergyParams, el_residual, gradient_J, nehari_normalize, quotient_J
from .solver import (
    MassConstraint,
    Solution,
    SolveConfig,
    SolverError,
    bubble_reallocation,
    minimize,
    minimize_constrained,
    sweep_R,
)
from .tiling import TilingError, TilingSpec, extend, extend_field, structure_map, verify_extension
from .diagnostics import (
    ConcentrationReport,
    DichotomyVerdict,
    classify_dichotomy,
    concentration_report,
    decay_profile,
    vertex_distance,
)
from .stx import (
    STXError,
    TGrid,
    bessel_K,
    cutoff_energy_defect,
    energy_constant,
    make_tgrid,
    neumann_trace,
    q_profile,
    st_energy,
    st_extend,
)

__all__ = [name for name in dir() if not name.startswith("_")]
