from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator
from typing import Any, Dict, List, Optional
from datetime import datetime
import hashlib
import json

from snls_lab.constants import EstimateMethod, Frame, OutcomeKind, ProfileKind
from snls_lab.db.schemas.noise import ProbabilityEstimate
from snls_lab.db.schemas.solver import BlowupThresholds
from snls_lab.db.schemas.spectral import GridSpec


class SweepConfig(BaseModel):
    """One regularization-by-noise study; strength s uses the single real mode phi = (s,)."""

    grid: GridSpec
    alpha: float
    lambda_sign: int = Field(-1, ge=-1, le=1, description="-1 is the soliton-bearing (focusing) sign")
    dt: float = Field(1e-3, gt=0)
    t_end: float = Field(10.0, gt=0)
    record_stride: int = Field(100, ge=1)
    thresholds: BlowupThresholds = Field(default_factory=BlowupThresholds)
    c_norm_list: List[float] = Field(..., min_length=1)
    n_paths: int = Field(..., ge=1)
    base_seed: int = 0
    profile: ProfileKind = ProfileKind.SOLITON_SCALED
    profile_params: Dict[str, float] = Field(default_factory=dict)
    certificate_eta: float = Field(0.1, gt=0, lt=2, description="A is the (1 - eta/2) quantile of sup h_c")
    certificate_C: float = Field(1.0, gt=0, description="Generic constant for the large-time budget")
    snapshot_paths: int = Field(0, ge=0, description="Paths per strength whose final field is saved")

    @field_validator("c_norm_list")
    @classmethod
    def _nonnegative(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("noise strengths must be nonnegative")
        return values

    @property
    def d(self) -> int:
        return self.grid.d

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


class TrajectoryOutcomeRecord(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    strength: float
    strength_index: int
    path_index: int
    seed: List[int]
    kind: OutcomeKind
    frame: Frame = Frame.PHYSICAL
    kind_loose: Optional[OutcomeKind] = None
    blowup_time: Optional[float] = None
    unstable: bool = False
    scattering_residual: Optional[float] = None
    peak_grad_ratio: Optional[float] = None
    certificate: Optional[bool] = None
    error: Optional[str] = None
    snapshot_file: Optional[str] = None


class StrengthSummary(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    strength: float
    n_paths: int
    n_global: int
    n_blowup: int
    n_undecided: int
    n_failed: int = 0
    n_global_loose: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    p_hat_loose: float
    ci_lo_loose: float
    ci_hi_loose: float
    mean_peak_grad: Optional[float] = None
    max_peak_grad: Optional[float] = None
    certificate_fraction: Optional[float] = None

    @property
    def estimate(self) -> ProbabilityEstimate:
        return ProbabilityEstimate(
            p_hat=self.p_hat, n_samples=self.n_paths, ci_lo=self.ci_lo, ci_hi=self.ci_hi, method=EstimateMethod.MONTE_CARLO
        )

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)


class SweepReport(BaseModel):
    run_id: str
    config: SweepConfig
    config_hash: str
    code_version: str
    schema_version: int
    created_at: datetime
    summaries: List[StrengthSummary]
    trajectories: List[TrajectoryOutcomeRecord]
    snapshot_files: List[str] = Field(default_factory=list)

    _final_fields: Dict[str, Any] = PrivateAttr(default_factory=dict)

    def summary_for(self, strength: float) -> StrengthSummary:
        for s in self.summaries:
            if s.strength == strength:
                return s
        raise KeyError(strength)


class EquivalenceRow(BaseModel):
    dt: float
    error: float
    ratio: Optional[float] = None


class EquivalenceTable(BaseModel):
    c_norm: float
    rows: List[EquivalenceRow]
    max_ratio: float = 0.65

    @property
    def converged(self) -> bool:
        return all(r.ratio is None or r.ratio <= self.max_ratio for r in self.rows)

    @property
    def overall_reduction(self) -> float:
        if not self.rows or self.rows[0].error == 0:
            return 0.0
        return self.rows[-1].error / self.rows[0].error


class VirialSeries(BaseModel):
    times: List[float]
    virial: List[float]
    wrap_fractions: List[float]
    contaminated: bool
    frame: Frame = Frame.RESCALED
