from .simulation import (
    Frame,
    Direction,
    OutcomeKind,
    Regime,
    EstimateMethod,
    Criticality,
    ProfileKind,
    ProfileConfig,
    ThresholdConfig,
    get_profile_config,
)
