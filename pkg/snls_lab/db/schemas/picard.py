from pydantic import BaseModel, Field
from typing import Dict, List, Optional

from snls_lab.constants import Regime


class PicardBudget(BaseModel):
    """Smallness constants of one fixed-point construction."""

    regime: Regime
    d: int = Field(..., ge=1)
    C_est: float = Field(..., gt=0, description="Generic constant used in the condition")
    C_source: str = Field("given", description="Where C_est came from")
    A: Optional[float] = Field(None, gt=0, description="Bound on ||h||_Linf (small-time regimes)")
    E: Optional[float] = Field(None, gt=1, description="H^1 bound (energy large-time)")
    M: Optional[float] = Field(None, gt=0, description="L^2 bound (mass large-time)")
    delta: Optional[float] = Field(None, gt=0)
    epsilon: Optional[float] = Field(None, gt=0)
    condition_value: float = Field(..., description="Left-hand side of the smallness inequality")
    satisfied: bool

    @property
    def parameter(self) -> float:
        return self.delta if self.regime.is_small_time else self.epsilon

    @property
    def ball_radius(self) -> float:
        """S-norm radius the iterates must stay in when the budget holds."""
        if self.regime.is_small_time:
            return 2 * self.delta
        if self.regime == Regime.ENERGY_LARGE_TIME:
            return 2 * self.C_est * self.E
        return (2 * self.C_est + 1) * self.M


class ContractionReport(BaseModel):
    iterate_distances: List[float]
    iterations: int
    converged: bool
    empirical_lipschitz: Optional[float] = None
    lipschitz_ratios: List[float] = Field(default_factory=list)
    lipschitz_seeds: List[List[int]] = Field(default_factory=list)
    residual: Optional[float] = Field(None, description="Relative sup-in-time L^2 distance to integrate() on the same path")
    ball_radius: Optional[float] = None
    max_iterate_norm: float = 0.0
    in_ball: Optional[bool] = None
    budget_satisfied: Optional[bool] = None
    metric: str = "S(I)"

    @property
    def geometric_decay(self) -> bool:
        d = [x for x in self.iterate_distances if x > 0]
        return len(d) < 2 or all(b < a for a, b in zip(d, d[1:]))


class NonlinearityProbeReport(BaseModel):
    d: int
    alpha: float
    n_samples: int
    seed: int
    pointwise_max: float
    pointwise_max_doubled: float
    pointwise_stable: bool
    scan_max: float
    norm_ratios: Dict[str, float] = Field(default_factory=dict)
    norm_ratios_refined: Dict[str, float] = Field(default_factory=dict)
    norm_stable: bool = True


class TwoStepReport(BaseModel):
    T: float
    t_end: float
    small_time: ContractionReport
    large_time: ContractionReport
    initial_norm: float
    max_norm: float
    growth_bound_holds: bool
    glue_residual: Optional[float] = None
    norm_kind: str = "L2"
