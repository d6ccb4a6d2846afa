from pydantic import BaseModel, Field, model_validator
from typing import Optional, Tuple
import math

from snls_lab.constants import EstimateMethod


class ProbabilityEstimate(BaseModel):
    p_hat: float = Field(..., ge=0, le=1)
    n_samples: int = Field(0, ge=0, description="0 for closed-form values")
    ci_lo: float = Field(..., ge=0, le=1)
    ci_hi: float = Field(..., ge=0, le=1)
    method: EstimateMethod
    tail_bound: Optional[float] = Field(None, description="Probability mass neglected by truncation")
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _contains_estimate(self):
        if not self.ci_lo <= self.p_hat <= self.ci_hi:
            raise ValueError(f"p_hat={self.p_hat} lies outside [{self.ci_lo}, {self.ci_hi}]")
        return self

    @property
    def wilson_ci(self) -> Tuple[float, float]:
        return (self.ci_lo, self.ci_hi)

    @property
    def standard_error(self) -> float:
        if self.n_samples == 0:
            return 0.0
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.n_samples)


class ExceedanceRow(BaseModel):
    """One row of the `gbm` table"""

    c_norm: float
    epsilon: float
    method: EstimateMethod
    p_hat: float
    ci_lo: float
    ci_hi: float
    n_samples: int
    seed: Optional[int] = None

    @classmethod
    def from_estimate(cls, c_norm: float, epsilon: float, est: ProbabilityEstimate) -> "ExceedanceRow":
        return cls(
            c_norm=c_norm,
            epsilon=epsilon,
            method=est.method,
            p_hat=est.p_hat,
            ci_lo=est.ci_lo,
            ci_hi=est.ci_hi,
            n_samples=est.n_samples,
            seed=est.seed,
        )


class MartingaleCheckpoint(BaseModel):
    t: float
    mean_mass_ratio: float
    standard_error: float
    mean_within_3se: bool
    max_identity_error: float
    increment_correlation: Optional[float] = None
    correlation_within_3se: bool = True


class MartingaleAuditReport(BaseModel):
    c_norm: float
    n_paths: int
    seed: int
    checkpoints: list[MartingaleCheckpoint]

    @property
    def passed(self) -> bool:
        return all(
            cp.mean_within_3se and cp.max_identity_error <= 1e-10 and cp.correlation_within_3se
            for cp in self.checkpoints
        )
