"""Derive, check and simulate hyperbolic moment systems for kinetic equations."""
from .analysis import (
    ScanReport,
    SpectrumReport,
    directional_matrix,
    hyperbolicity_scan,
    invariance_suite,
    spectrum,
    symmetrization_check,
)
from .assembly import (
    PRESETS,
    ModelSpec,
    MomentSystem,
    assemble_system,
    bgk_source,
    build_time_derivative_matrix,
    build_velocity_matrices,
    grad_vs_regularized_delta,
    pack_state,
    preset,
    unpack_state,
)
from .basis import BasisFamily, MatrixWindow, count, index_from_ordinal, index_of
from .projection import (
    ProjectionPair,
    cutoff_projection,
    ordered_hierarchy_projection,
    shifted_projection,
    validate_projection,
)
from .state import StateVector, derived_moments, galilean_shift, maxwellian_state, rotate_state, sample_state

__version__ = "0.1.0"
