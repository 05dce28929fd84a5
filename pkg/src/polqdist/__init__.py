"""Polarization quasidistributions for two-mode quantum light.

States live in the photon-number basis |N - k>_H |k>_V, truncated at a
total excitation n_max.  The package evaluates the Husimi Q and Wigner W
functions over the Poincare sphere, checks them against a slow kernel
oracle, and ships a small CLI for field evaluation and figure presets.
"""

from .kernel import TruncatedKernel, kernel_matrix, quasidist_via_kernel
from .quasidist import (
    DEFAULT_GRID,
    EQUATOR_GUARD,
    DistributionField,
    EquatorGuardError,
    SphericalGrid,
    coherent_wigner_closed,
    evaluate_field,
    integrate,
    normalized_field,
    q_value,
    tmsv_wigner_closed,
    wigner_value,
)
from .states import (
    HARD_N_MAX_CAP,
    STATE_FAMILIES,
    PolarizationState,
    StateSpec,
    TruncationCapError,
    build_state,
    make_coherent_pair,
    make_kerr,
    make_squeezed_pair,
    make_tmsv,
    mean_excitation,
    squeezed_fock_amplitude,
    squeezed_fock_amplitudes,
    state_from_blocks,
    suggest_truncation,
)
from .su2 import (
    DEFAULT_ORACLE_CAP,
    ORACLE_CAP_ENV,
    OracleCapError,
    Su2CoherentVector,
    WignerDTable,
    clear_table_cache,
    reduce_angle,
    resolve_oracle_cap,
    rotation_matrix_oracle,
    su2_coherent_amplitudes,
    wigner_d,
    wigner_d_table,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID",
    "DEFAULT_ORACLE_CAP",
    "EQUATOR_GUARD",
    "HARD_N_MAX_CAP",
    "ORACLE_CAP_ENV",
    "STATE_FAMILIES",
    "DistributionField",
    "EquatorGuardError",
    "OracleCapError",
    "PolarizationState",
    "SphericalGrid",
    "StateSpec",
    "Su2CoherentVector",
    "TruncatedKernel",
    "TruncationCapError",
    "WignerDTable",
    "build_state",
    "clear_table_cache",
    "coherent_wigner_closed",
    "evaluate_field",
    "integrate",
    "kernel_matrix",
    "make_coherent_pair",
    "make_kerr",
    "make_squeezed_pair",
    "make_tmsv",
    "mean_excitation",
    "normalized_field",
    "q_value",
    "quasidist_via_kernel",
    "reduce_angle",
    "resolve_oracle_cap",
    "rotation_matrix_oracle",
    "squeezed_fock_amplitude",
    "squeezed_fock_amplitudes",
    "state_from_blocks",
    "su2_coherent_amplitudes",
    "suggest_truncation",
    "tmsv_wigner_closed",
    "wigner_d",
    "wigner_d_table",
    "wigner_value",
]
