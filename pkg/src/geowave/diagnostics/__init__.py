"""Energy, momentum, residual and constraint diagnostics of simulated trajectories."""

from .decay import DecayConfig, DecayReport, penalty_decay_study
from .energy import (
    EnergyInequalityReport,
    EnergyWindow,
    LFunction,
    L_identity,
    L_sqrt,
    check_L_admissible,
    energy_inequality_mc,
    local_energy,
    local_energy_from_norms,
    s_squared,
)
from .momentum import MomentumSeries, momentum_density, momentum_series, reconstruct_velocity
from .residuals import ito_residual, momentum_weak_residual, weak_form_residual

__all__ = [
    "DecayConfig",
    "DecayReport",
    "penalty_decay_study",
    "EnergyInequalityReport",
    "EnergyWindow",
    "LFunction",
    "L_identity",
    "L_sqrt",
    "check_L_admissible",
    "energy_inequality_mc",
    "local_energy",
    "local_energy_from_norms",
    "s_squared",
    "MomentumSeries",
    "momentum_density",
    "momentum_series",
    "reconstruct_velocity",
    "ito_residual",
    "momentum_weak_residual",
    "weak_form_residual",
]
