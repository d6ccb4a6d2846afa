"""
Simulation enums and predefined configurations
"""

from enum import Enum
from typing import Dict, Any


class Frame(str, Enum):
    PHYSICAL = "physical"   # X, the Itô SNLS solution
    RESCALED = "rescaled"   # u = e^{mu_hat t - W(t)} X


class Direction(str, Enum):
    TO_RESCALED = "to-rescaled"
    TO_PHYSICAL = "to-physical"


class OutcomeKind(str, Enum):
    GLOBAL_SCATTERING = "global-scattering"
    BLOWUP = "blowup"
    UNDECIDED = "undecided"


class Regime(str, Enum):
    ENERGY_SMALL_TIME = "energy-small-time"
    ENERGY_LARGE_TIME = "energy-large-time"
    MASS_SMALL_TIME = "mass-small-time"
    MASS_LARGE_TIME = "mass-large-time"

    @property
    def is_energy(self) -> bool:
        return self in (Regime.ENERGY_SMALL_TIME, Regime.ENERGY_LARGE_TIME)

    @property
    def is_small_time(self) -> bool:
        return self in (Regime.ENERGY_SMALL_TIME, Regime.MASS_SMALL_TIME)


class EstimateMethod(str, Enum):
    MONTE_CARLO = "monte-carlo"
    CLOSED_FORM = "closed-form"


class Criticality(int, Enum):
    MASS = 0     # alpha = 1 + 4/d, data in L^2
    ENERGY = 1   # alpha = 1 + 4/(d-2), data in H^1


class ProfileKind(str, Enum):
    GAUSSIAN = "gaussian"
    SOLITON_SCALED = "soliton_scaled"
    GROUND_STATE = "ground_state"


class ProfileConfig:
    """Predefined initial-data recipes"""

    GAUSSIAN = {
        "name": "Gaussian",
        "description": "amplitude * exp(-|x|^2 / (2 width^2)), centered in the box",
        "default_config": {
            "amplitude": 1.0,
            "width": 1.0,
        },
    }

    SOLITON_SCALED = {
        "name": "Scaled ground state",
        "description": "factor * Q, Q the ground state of Q'' - Q + |Q|^(alpha-1) Q = 0",
        "default_config": {
            "factor": 1.1,  # super-threshold focusing fixture
        },
    }

    GROUND_STATE = {
        "name": "Ground state",
        "description": "scale * Q for any (d, alpha), Q computed by Petviashvili iteration",
        "default_config": {
            "scale": 1.0,
        },
    }


class ThresholdConfig:
    """Defaults for the blow-up proxy and the scattering proxy"""

    BLOWUP = {
        "grad_factor": 1e3,         # times the initial ||grad u|| / ||u||
        "amp_factor": 1e2,          # times the initial max|u| / ||u||
        "resolution_fraction": 0.25,  # of the largest resolved wavenumber
    }

    SCATTERING = {
        "strict_tol": 1e-3,
        "loose_tol": 5e-2,
        "window_fraction": 0.5,     # residual window [t_end/2, t_end]
    }

    BOUNDARY = {
        "wrap_fraction": 0.45,      # |x_i| > 0.45 L counts as near the box edge
        "wrap_mass_tol": 1e-6,
    }


def get_profile_config(kind: ProfileKind) -> Dict[str, Any]:
    """Get configuration for a specific initial profile"""
    configs = {
        ProfileKind.GAUSSIAN: ProfileConfig.GAUSSIAN,
        ProfileKind.SOLITON_SCALED: ProfileConfig.SOLITON_SCALED,
        ProfileKind.GROUND_STATE: ProfileConfig.GROUND_STATE,
    }
    return configs.get(kind, {})

