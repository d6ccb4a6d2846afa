from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator
from typing import Dict, List, Optional

from snls_lab.constants import EstimateMethod, Frame, ProfileKind, Regime
from snls_lab.numerics.noise import criticality_of, parse_phi_list


class GridParams(BaseModel):
    d: int = Field(1, ge=1, le=3, description="Spatial dimension")
    n: int = Field(256, ge=8, description="Points per axis, power of two")
    L: float = Field(40.0, gt=0, description="Box side length")

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, n: int) -> int:
        if n & (n - 1):
            raise ValueError("n must be a power of two")
        return n


class SimulateParams(GridParams):
    dt: float = Field(1e-3, gt=0, description="Time step")
    t_end: float = Field(1.0, gt=0, description="Horizon")
    frame: Frame = Frame.PHYSICAL
    phi: str = Field("", description="Noise coefficients as comma-separated \"a+bi\" literals")
    alpha: Optional[float] = Field(None, gt=1, description="Nonlinearity power; mass-critical when omitted")
    lambda_sign: int = Field(-1, ge=-1, le=1)
    seed: int = 0
    record_stride: int = Field(10, ge=1, description="Steps between event lines")
    profile: ProfileKind = ProfileKind.GAUSSIAN
    profile_params: Dict[str, float] = Field(default_factory=dict)
    snapshots: bool = False

    @field_validator("phi")
    @classmethod
    def _parse_phi(cls, text: str) -> str:
        parse_phi_list(text)
        return text

    @field_validator("alpha")
    @classmethod
    def _critical(cls, alpha: Optional[float], info: ValidationInfo) -> Optional[float]:
        if alpha is not None and "d" in info.data:
            criticality_of(alpha, info.data["d"])
        return alpha

    @property
    def coefficients(self) -> List[complex]:
        return parse_phi_list(self.phi)

    @model_validator(mode="after")
    def _multiple(self):
        steps = round(self.t_end / self.dt)
        if steps < 1 or abs(self.t_end - steps * self.dt) > 1e-12 * max(1.0, self.t_end):
            raise ValueError("t_end must be a multiple of dt")
        return self


class GbmParams(BaseModel):
    c_norm: List[float] = Field(..., min_length=1, description="Noise strengths ||c||")
    epsilon: float = Field(..., gt=0)
    alpha: float = Field(5.0, gt=1)
    method: EstimateMethod = EstimateMethod.CLOSED_FORM
    n_samples: int = Field(100_000, ge=1)
    seed: int = 0
    dt: float = Field(1e-3, gt=0, description="Reduced-time step of the Monte Carlo walk")

    @field_validator("c_norm")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        if any(not v > 0 for v in values):
            raise ValueError("noise strengths must be positive")
        return values


class PicardParams(GridParams):
    regime: Regime = Regime.MASS_SMALL_TIME
    n: int = Field(128, ge=8)
    c_norm: float = Field(1.0, gt=0, description="Noise strength; the split time is 1/c_norm")
    t_end: float = Field(2.0, gt=0, description="End of the large-time interval")
    lambda_sign: int = Field(-1, ge=-1, le=1)
    amplitude: float = Field(0.1, gt=0, description="Gaussian initial amplitude")
    C_est: Optional[float] = Field(None, gt=0, description="Generic constant; estimated when omitted")
    strichartz_samples: int = Field(8, ge=1)
    n_t: int = Field(51, ge=2, description="Time samples per interval")
    max_iter: int = Field(50, ge=1)
    tol: float = Field(1e-10, gt=0)
    n_pairs: int = Field(20, ge=0, description="Random pairs for the empirical Lipschitz constant")
    seed: int = 0
    path_dt: float = Field(1e-3, gt=0)

    @model_validator(mode="after")
    def _split_inside(self):
        if self.regime.is_energy and self.d != 3:
            raise ValueError("energy-critical regimes run in d = 3")
        if not self.regime.is_small_time and not 1.0 / self.c_norm < self.t_end:
            raise ValueError("t_end must exceed the split time 1/c_norm")
        return self


class SelftestResult(BaseModel):
    name: str
    passed: bool
    detail: Optional[str] = None
