from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, Literal, Tuple
import math


class GridSpec(BaseModel):
    """Periodic box [-L/2, L/2)^d with n points per axis."""

    model_config = ConfigDict(frozen=True)

    d: int = Field(..., ge=1, le=3, description="Spatial dimension")
    n: int = Field(..., ge=8, description="Points per axis (power of two)")
    L: float = Field(..., gt=0, description="Box side length")

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, n: int) -> int:
        if n & (n - 1):
            raise ValueError("n must be a power of two")
        return n

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def n_points(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    @property
    def volume(self) -> float:
        return self.L ** self.d

    @property
    def k_max(self) -> float:
        """Largest resolved wavenumber per axis (Nyquist)."""
        return math.pi * self.n / self.L


class StrichartzSpec(BaseModel):
    """Space-time norm L^q(I; L^p) (derivative_order 0) or L^q(I; W^{1,p}) (order 1)."""

    q: float = Field(..., ge=2)
    p: float = Field(..., ge=2)
    derivative_order: Literal[0, 1] = 0
    t_a: float = 0.0
    t_b: float = 1.0
    admissible: bool = Field(False, description="Require 2/q + d/p = d/2")
    d: Optional[int] = Field(None, ge=1, le=3)

    @model_validator(mode="after")
    def _check(self):
        if self.t_b < self.t_a:
            raise ValueError("interval end precedes its start")
        if self.admissible:
            from snls_lab.numerics.spectral import is_admissible
            if self.d is None or not is_admissible(self.q, self.p, self.d):
                raise ValueError(f"(q, p) = ({self.q}, {self.p}) is not admissible for d = {self.d}")
        return self

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.t_a, self.t_b)
