"""
Periodic pseudospectral discretization of R^d.

The box [-L/2, L/2)^d stands in for R^d; the free Schrödinger group is applied
exactly as the Fourier multiplier exp(-i t |xi|^2). Spatial norms are Riemann
sums weighted by the cell volume, time integrals use the trapezoid rule.
"""
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import fft as sfft
from scipy.integrate import trapezoid

from snls_lab.constants import Frame
from snls_lab.db.schemas.spectral import GridSpec, StrichartzSpec
from snls_lab.errors import (
    IntervalNotCoveredError,
    InvalidDimensionError,
    InvalidExponentError,
    InvalidResolutionError,
    NonFiniteFieldError,
)

logger = logging.getLogger(__name__)

ADMISSIBLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FieldState:
    grid: GridSpec
    values: np.ndarray
    frame: Frame = Frame.PHYSICAL
    time: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.size != self.grid.n_points:
            raise InvalidResolutionError(
                f"field has {values.size} values, grid expects {self.grid.n_points}"
            )
        object.__setattr__(self, "values", values.reshape(self.grid.shape))
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "time", float(self.time))

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def evolve(self, values: np.ndarray, time: Optional[float] = None, frame: Optional[Frame] = None) -> "FieldState":
        return replace(
            self,
            values=values,
            time=self.time if time is None else time,
            frame=self.frame if frame is None else frame,
        )


def make_grid(d: int, n: int, L: float) -> GridSpec:
    if d not in (1, 2, 3):
        raise InvalidDimensionError(f"d must be 1, 2 or 3, got {d}", parameter="d")
    if n < 8 or n & (n - 1):
        raise InvalidResolutionError(f"n must be a power of two >= 8, got {n}", parameter="n")
    if not L > 0:
        raise InvalidResolutionError(f"box length must be positive, got {L}", parameter="L")
    return GridSpec(d=d, n=n, L=float(L))


@lru_cache(maxsize=32)
def coordinates(grid: GridSpec) -> Tuple[np.ndarray, ...]:
    axis = -grid.L / 2 + grid.spacing * np.arange(grid.n)
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    for m in mesh:
        m.setflags(write=False)
    return tuple(mesh)


@lru_cache(maxsize=32)
def _wavenumbers(grid: GridSpec) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...], np.ndarray]:
    """(k per axis, k per axis with the Nyquist mode zeroed, |k|^2), broadcastable."""
    k = 2 * np.pi * sfft.fftfreq(grid.n, d=grid.spacing)
    k_odd = k.copy()
    k_odd[grid.n // 2] = 0.0
    full, deriv = [], []
    for axis in range(grid.d):
        shape = [1] * grid.d
        shape[axis] = grid.n
        full.append(k.reshape(shape))
        deriv.append(k_odd.reshape(shape))
    ksq = sum(kk ** 2 for kk in full) * np.ones(grid.shape)
    for arr in full + deriv + [ksq]:
        arr.setflags(write=False)
    return tuple(full), tuple(deriv), ksq


def laplacian_symbol(grid: GridSpec) -> np.ndarray:
    """|xi|^2 on the grid; -Delta acts as multiplication by it."""
    return _wavenumbers(grid)[2]


def _require_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError("field contains NaN or Inf")


def propagate_values(values: np.ndarray, grid: GridSpec, dt: float) -> np.ndarray:
    if dt == 0:
        return np.array(values, dtype=np.complex128, copy=True)
    spectrum = sfft.fftn(values)
    spectrum *= np.exp(-1j * dt * laplacian_symbol(grid))
    return sfft.ifftn(spectrum)


def free_propagate(f: FieldState, dt: float) -> FieldState:
    """e^{i dt Delta} f; dt may be negative."""
    _require_finite(f.values)
    return f.evolve(propagate_values(f.values, f.grid, dt), time=f.time + dt)


def lp_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    if not p >= 1:
        raise InvalidExponentError(f"p must lie in [1, inf], got {p}", parameter="p")
    amplitude = np.abs(values)
    if math.isinf(p):
        return float(amplitude.max())
    return float((grid.cell_volume * np.sum(amplitude ** p)) ** (1.0 / p))


def lebesgue_norm(f: FieldState, p: float) -> float:
    return lp_norm(f.values, f.grid, p)


def l2_norm_fourier(values: np.ndarray, grid: GridSpec) -> float:
    """Parseval evaluation of the discrete L^2 norm."""
    spectrum = sfft.fftn(values)
    return float(np.sqrt(grid.cell_volume / grid.n_points * np.sum(np.abs(spectrum) ** 2)))


def gradient_values(values: np.ndarray, grid: GridSpec) -> List[np.ndarray]:
    spectrum = sfft.fftn(values)
    return [sfft.ifftn(1j * k * spectrum) for k in _wavenumbers(grid)[1]]


def gradient(f: FieldState) -> List[FieldState]:
    return [f.evolve(g) for g in gradient_values(f.values, f.grid)]


def gradient_l2_norm(values: np.ndarray, grid: GridSpec) -> float:
    spectrum = sfft.fftn(values)
    deriv = _wavenumbers(grid)[1]
    ksq = sum(k ** 2 for k in deriv)
    return float(np.sqrt(grid.cell_volume / grid.n_points * np.sum(ksq * np.abs(spectrum) ** 2)))


def sobolev_h1_norm(f: FieldState) -> float:
    """||f||_{H^1}^2 = ||f||_2^2 + ||grad f||_2^2."""
    return h1_norm_values(f.values, f.grid)


def h1_norm_values(values: np.ndarray, grid: GridSpec) -> float:
    return float(math.hypot(lp_norm(values, grid, 2), gradient_l2_norm(values, grid)))


def w1p_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    """||u||_{L^p} + || |grad u| ||_{L^p}."""
    grad = gradient_values(values, grid)
    modulus = np.sqrt(sum(np.abs(g) ** 2 for g in grad))
    return lp_norm(values, grid, p) + lp_norm(modulus, grid, p)


def spatial_norm(values: np.ndarray, grid: GridSpec, p: float, derivative_order: int = 0) -> float:
    if derivative_order == 1:
        return w1p_norm(values, grid, p)
    return lp_norm(values, grid, p)


def is_admissible(q: float, p: float, d: int) -> bool:
    if not (q >= 2 and p >= 2):
        return False
    if d == 2 and q == 2 and math.isinf(p):
        return False
    lhs = (0.0 if math.isinf(q) else 2.0 / q) + (0.0 if math.isinf(p) else d / p)
    return abs(lhs - d / 2) <= ADMISSIBLE_TOL


def energy_pair(d: int) -> Tuple[float, float]:
    if d < 3:
        raise InvalidDimensionError(f"energy-critical pair needs d >= 3, got {d}", parameter="d")
    return 2 * d / (d - 2), 2 * d ** 2 / (d ** 2 - 2 * d + 4)


def mass_pair(d: int) -> Tuple[float, float]:
    r = 2 * (d + 2) / d
    return r, r


def dual_pair(q: float, p: float) -> Tuple[float, float]:
    return q / (q - 1), p / (p - 1)


def spacetime_norm_samples(
    times: Sequence[float],
    fields: Sequence[np.ndarray],
    grid: GridSpec,
    spec: StrichartzSpec,
    tol: float = 1e-12,
) -> float:
    """
    ||u||_{L^q([t_a, t_b]; X)} from samples u(t_j), X = L^p or W^{1,p}.

    The time integrand ||u(t)||_X^q is interpolated linearly between samples
    and integrated exactly, so the value is monotone under interval inclusion.
    """
    times = np.asarray(times, dtype=float)
    t_a, t_b = spec.t_a, spec.t_b
    if t_b <= t_a:
        return 0.0
    if len(times) == 0 or times[0] > t_a + tol or times[-1] < t_b - tol:
        raise IntervalNotCoveredError(
            f"samples span [{times[0] if len(times) else None}, {times[-1] if len(times) else None}], "
            f"interval is [{t_a}, {t_b}]"
        )
    lo = max(int(np.searchsorted(times, t_a + tol, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(times, t_b - tol, side="left")), len(times) - 1)
    idx = np.arange(lo, hi + 1)
    norms = np.array([spatial_norm(fields[i], grid, spec.p, spec.derivative_order) for i in idx])
    inner = times[idx]
    keep = (inner > t_a) & (inner < t_b)
    nodes = np.concatenate(([t_a], inner[keep], [t_b]))
    if math.isinf(spec.q):
        return float(np.interp(nodes, inner, norms).max()) if len(inner) > 1 else float(norms.max())
    integrand = norms ** spec.q
    values = np.interp(nodes, inner, integrand) if len(inner) > 1 else np.full(len(nodes), integrand[0])
    return float(trapezoid(values, nodes) ** (1.0 / spec.q))


def spacetime_norm(traj, spec: StrichartzSpec) -> float:
    """Space-time norm of a TrajectoryRecord (or anything exposing sampled fields)."""
    times, fields = traj.sampled_fields()
    return spacetime_norm_samples(times, fields, traj.grid, spec)


def gradient_modulus(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.sqrt(sum(np.abs(g) ** 2 for g in gradient_values(values, grid)))


def mixed_norm(times: Sequence[float], fields: Sequence[np.ndarray], grid: GridSpec, q: float, p: float) -> float:
    """L^q_t L^p_x by trapezoid in time; any q, p >= 1, used for the dual N(I) norms."""
    norms = np.array([lp_norm(f, grid, p) for f in fields])
    if math.isinf(q):
        return float(norms.max())
    return float(trapezoid(norms ** q, np.asarray(times, dtype=float)) ** (1.0 / q))
