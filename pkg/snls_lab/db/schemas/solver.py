from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator
from typing import Optional, Literal
import math

from snls_lab.constants import Frame, OutcomeKind, ThresholdConfig
from snls_lab.db.schemas.spectral import GridSpec
from snls_lab.numerics.noise import NoiseModel


class BlowupThresholds(BaseModel):
    """
    Numerical proxies for blow-up and scattering.

    The gradient and amplitude triggers act on the frame-invariant ratios
    ||grad u||_2 / ||u||_2 and max|u| / ||u||_2. When no absolute cap is given
    the gradient cap is min(grad_factor * initial ratio, resolution_fraction * k_max)
    and the amplitude cap is amp_factor * initial ratio.
    """

    grad_cap: Optional[float] = Field(None, gt=0)
    amp_cap: Optional[float] = Field(None, gt=0)
    grad_factor: float = Field(ThresholdConfig.BLOWUP["grad_factor"], gt=0)
    amp_factor: float = Field(ThresholdConfig.BLOWUP["amp_factor"], gt=0)
    resolution_fraction: float = Field(ThresholdConfig.BLOWUP["resolution_fraction"], gt=0, le=1)
    scatter_window: Optional[float] = Field(None, gt=0, description="Trailing window length; default a fraction of t_end")
    window_fraction: float = Field(ThresholdConfig.SCATTERING["window_fraction"], gt=0, le=1)
    scatter_tol: float = Field(ThresholdConfig.SCATTERING["strict_tol"], gt=0)
    loose_tol: float = Field(ThresholdConfig.SCATTERING["loose_tol"], gt=0)

    def window_length(self, t_end: float) -> float:
        return self.scatter_window if self.scatter_window is not None else self.window_fraction * t_end


class SolverConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: GridSpec
    model: NoiseModel
    dt: float = Field(..., gt=0, description="Time step")
    t_end: float = Field(..., gt=0, description="Horizon")
    frame: Frame = Frame.PHYSICAL
    record_stride: int = Field(1, ge=1, description="Snapshot cadence in steps")
    thresholds: BlowupThresholds = Field(default_factory=BlowupThresholds)
    snapshot_fields: bool = Field(True, description="Keep full fields at every snapshot, not only norms")

    @field_validator("model", mode="before")
    @classmethod
    def _model_from_dict(cls, value):
        if isinstance(value, dict):
            return NoiseModel.from_dict(value)
        return value

    @field_serializer("model")
    def _model_to_dict(self, model) -> dict:
        return model.to_dict()

    @model_validator(mode="after")
    def _check(self):
        n = round(self.t_end / self.dt)
        if n < 1 or abs(self.t_end - n * self.dt) > 1e-12 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        if self.model.d != self.grid.d:
            raise ValueError(f"noise model dimension {self.model.d} differs from grid dimension {self.grid.d}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


class Outcome(BaseModel):
    kind: OutcomeKind
    blowup_time: Optional[float] = None
    trigger: Optional[Literal["gradient", "amplitude", "non-finite"]] = None
    unstable: bool = False
    scattering_residual: Optional[float] = None
    kind_loose: Optional[OutcomeKind] = Field(None, description="Classification under the loose tolerance")
    peak_grad_ratio: float = 0.0
    peak_amp_ratio: float = 0.0
    grad_cap: Optional[float] = None
    amp_cap: Optional[float] = None

    @property
    def is_blowup(self) -> bool:
        return self.kind == OutcomeKind.BLOWUP

    @property
    def is_global(self) -> bool:
        return self.kind == OutcomeKind.GLOBAL_SCATTERING


class SnapshotSummary(BaseModel):
    """Norm summary of one recorded time; one JSON line of the event log."""

    time: float
    mass: float
    h1_norm: float
    h_c: float
    grad_ratio: float
    amp_ratio: float
    energy: float
    residual: Optional[float] = None

    @property
    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.mass, self.h1_norm, self.grad_ratio, self.amp_ratio))

