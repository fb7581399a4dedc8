"""Spectral Klein-Gordon simulator and normal-form laboratory on the discrete torus."""

from .spectral import (
    FrequencySpec,
    ModeState,
    MollifierSpec,
    RealState,
    TorusGrid,
    all_super_actions,
    canonical_action_modes,
    from_modes,
    grid_sobolev_norm,
    identity_mollifier,
    power_law_initial_data,
    quadratic_energy,
    sobolev_norm,
    super_action,
    to_modes,
)

__all__ = [
    "FrequencySpec",
    "ModeState",
    "MollifierSpec",
    "RealState",
    "TorusGrid",
    "all_super_actions",
    "canonical_action_modes",
    "from_modes",
    "grid_sobolev_norm",
    "identity_mollifier",
    "power_law_initial_data",
    "quadratic_energy",
    "sobolev_norm",
    "super_action",
    "to_modes",
]

__version__ = "0.1.0"
