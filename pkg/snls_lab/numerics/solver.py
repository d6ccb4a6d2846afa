"""
Strang split-step integration of the SNLS in the physical frame (X) and of the
random NLS  i u_t + Delta u = lambda h_c |u|^{alpha-1} u  in the rescaled frame (u).

Every substep is exact: the free flow in Fourier space, the nonlinear flow as
a pointwise phase rotation, and the noise as the scalar Itô exponential
e^{dW - mu_hat dt}. Only splitting commutators and spatial truncation remain.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging
import math

import numpy as np
from scipy import fft as sfft

from snls_lab.constants import Criticality, Frame, OutcomeKind
from snls_lab.db.schemas.solver import BlowupThresholds, Outcome, SnapshotSummary, SolverConfig
from snls_lab.db.schemas.spectral import GridSpec
from snls_lab.errors import (
    FrameMismatchError,
    InvalidParameterError,
    MeshMismatchError,
    MissingSnapshotError,
    NonFiniteFieldError,
    OffMeshError,
)
from snls_lab.numerics.noise import BrownianPath, NoiseModel, MESH_TOL
from snls_lab.numerics.spectral import (
    FieldState,
    _wavenumbers,
    gradient_l2_norm,
    h1_norm_values,
    laplacian_symbol,
    lp_norm,
    propagate_values,
)

logger = logging.getLogger(__name__)

TIME_TOL = 1e-9

# caps that never fire: runs reach t_end whatever the field does
NO_TRIGGER = BlowupThresholds(grad_cap=1e300, amp_cap=1e300)


@dataclass(eq=False)
class Snapshot:
    summary: SnapshotSummary
    frame: Frame
    values: Optional[np.ndarray] = None

    @property
    def time(self) -> float:
        return self.summary.time

    @property
    def has_field(self) -> bool:
        return self.values is not None


@dataclass(eq=False)
class TrajectoryRecord:
    config: SolverConfig
    path: BrownianPath
    snapshots: List[Snapshot] = field(default_factory=list)
    outcome: Optional[Outcome] = None

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    @property
    def model(self) -> NoiseModel:
        return self.config.model

    @property
    def frame(self) -> Frame:
        return self.config.frame

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final_time(self) -> float:
        return self.snapshots[-1].time

    def summaries(self) -> List[SnapshotSummary]:
        return [s.summary for s in self.snapshots]

    def full_snapshots(self) -> List[Snapshot]:
        return [s for s in self.snapshots if s.has_field]

    def snapshot_at(self, t: float) -> Snapshot:
        for snap in self.snapshots:
            if abs(snap.time - t) <= TIME_TOL * max(1.0, abs(t)) and snap.has_field:
                return snap
        raise MissingSnapshotError(f"no full snapshot recorded at t={t}", parameter="t")

    def field_at(self, t: float) -> FieldState:
        snap = self.snapshot_at(t)
        return FieldState(grid=self.grid, values=snap.values, frame=snap.frame, time=snap.time)

    def final_field(self) -> FieldState:
        return self.field_at(self.final_time)

    def sampled_fields(self) -> Tuple[np.ndarray, List[np.ndarray]]:
        missing = [s.time for s in self.snapshots if not s.has_field]
        if missing:
            raise MissingSnapshotError(f"{len(missing)} snapshots hold norms only (first at t={missing[0]})")
        return self.times, [s.values for s in self.snapshots]


def _phase_rotate(values: np.ndarray, coefficient: float, alpha: float, dt: float) -> np.ndarray:
    if coefficient == 0 or dt == 0:
        return values
    return values * np.exp(-1j * coefficient * dt * np.abs(values) ** (alpha - 1))


def nonlinear_phase_step(f: FieldState, h_value: float, dt: float, model: NoiseModel) -> FieldState:
    """u <- exp(-i lambda h |u|^{alpha-1} dt) u, the exact dispersion-free flow."""
    if h_value < 0 or dt < 0:
        raise InvalidParameterError(f"need h >= 0 and dt >= 0, got h={h_value}, dt={dt}")
    values = _phase_rotate(f.values, model.lambda_sign * h_value, model.alpha, dt)
    return f.evolve(np.array(values, copy=True))


def noise_multiplier_step(f: FieldState, path: BrownianPath, model: NoiseModel, t_from: float, t_to: float) -> FieldState:
    """X <- exp(W(t_to) - W(t_from) - mu_hat (t_to - t_from)) X, the exact Itô flow of the noise."""
    j0, j1 = path.index_of(t_from), path.index_of(t_to)
    factor = np.exp(path.W[j1] - path.W[j0] - model.mu_hat * (j1 - j0) * path.dt)
    return f.evolve(f.values * factor, time=f.time + (t_to - t_from))


def _gbm_at(path: BrownianPath, model: NoiseModel, j: int) -> float:
    return float(np.exp((model.alpha - 1) * (path.M[j] - model.c_norm ** 2 * j * path.dt)))


def _midpoint_gbm(path: BrownianPath, model: NoiseModel, j0: int, j1: int) -> float:
    """h_c at the midpoint of [t_j0, t_j1]; between mesh points the exponent is averaged."""
    if (j1 - j0) % 2 == 0:
        return _gbm_at(path, model, (j0 + j1) // 2)
    t_mid = 0.5 * (j0 + j1) * path.dt
    m_mid = 0.5 * (path.M[j0] + path.M[j1])
    return float(np.exp((model.alpha - 1) * (m_mid - model.c_norm ** 2 * t_mid)))


def frame_scale(path: BrownianPath, model: NoiseModel, j: int) -> float:
    """|e^{mu_hat t - W(t)}| = exp(-(M(t) - ||c||^2 t)), the modulus of the X -> u multiplier."""
    return float(np.exp(-(path.M[j] - model.c_norm ** 2 * j * path.dt)))


def summarize(values: np.ndarray, grid: GridSpec, frame: Frame, t: float, path: BrownianPath, model: NoiseModel) -> SnapshotSummary:
    j = path.index_of(t)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        norm = lp_norm(values, grid, 2)
        grad = gradient_l2_norm(values, grid)
        amp = float(np.max(np.abs(values)))
        h = _gbm_at(path, model, j)
        scale = frame_scale(path, model, j) if frame == Frame.PHYSICAL else 1.0
        potential = grid.cell_volume * float(np.sum(np.abs(values) ** (model.alpha + 1)))
        energy = 0.5 * (scale * grad) ** 2 + model.lambda_sign * h / (model.alpha + 1) * scale ** (model.alpha + 1) * potential
        return SnapshotSummary(
            time=t,
            mass=norm ** 2,
            h1_norm=math.hypot(norm, grad) if math.isfinite(norm) and math.isfinite(grad) else float("nan"),
            h_c=h,
            grad_ratio=grad / norm if norm > 0 else (0.0 if norm == 0 else float("nan")),
            amp_ratio=amp / norm if norm > 0 else (0.0 if norm == 0 else float("nan")),
            energy=energy,
        )


def blowup_caps(thresholds: BlowupThresholds, grid: GridSpec, grad0: float, amp0: float) -> Tuple[float, float]:
    if thresholds.grad_cap is not None:
        grad_cap = thresholds.grad_cap
    else:
        resolution_cap = thresholds.resolution_fraction * grid.k_max
        grad_cap = min(thresholds.grad_factor * grad0, resolution_cap) if grad0 > 0 else resolution_cap
    amp_cap = thresholds.amp_cap if thresholds.amp_cap is not None else thresholds.amp_factor * amp0
    if amp_cap <= 0:
        amp_cap = math.inf
    return grad_cap, amp_cap


def integrate(config: SolverConfig, path: BrownianPath, initial: FieldState) -> TrajectoryRecord:
    grid, model, dt = config.grid, config.model, config.dt
    if initial.frame != config.frame:
        raise FrameMismatchError(f"initial field is {initial.frame.value}, config expects {config.frame.value}")
    if initial.grid != grid:
        raise MeshMismatchError("initial field lives on a different grid than the config")
    if not initial.is_finite:
        raise NonFiniteFieldError("initial field contains NaN or Inf")
    stride = int(round(dt / path.dt))
    if stride < 1 or abs(stride * path.dt - dt) > MESH_TOL * dt:
        raise OffMeshError(f"dt={dt} is not a multiple of the path step {path.dt}", parameter="dt")
    n_steps = config.n_steps
    if n_steps * stride > path.n_steps:
        raise OffMeshError(f"path horizon {path.horizon} is shorter than t_end={config.t_end}", parameter="t_end")
    k0 = int(round(initial.time / dt))
    if abs(k0 * dt - initial.time) > MESH_TOL * max(1.0, abs(initial.time)) or not 0 <= k0 < n_steps:
        raise OffMeshError(f"initial time {initial.time} is not a step of [0, {config.t_end})", parameter="time")

    window_step = max(0, n_steps - int(round(config.thresholds.window_length(config.t_end) / dt)))
    half = np.exp(-0.5j * dt * laplacian_symbol(grid))
    deriv_sq = sum(k ** 2 for k in _wavenumbers(grid)[1])
    parseval = grid.cell_volume / grid.n_points
    physical = config.frame == Frame.PHYSICAL
    coefficient = float(model.lambda_sign)

    traj = TrajectoryRecord(config=config, path=path)

    def record(k: int, values: np.ndarray, full: bool):
        t = k * dt
        keep = full or config.snapshot_fields
        traj.snapshots.append(
            Snapshot(
                summary=summarize(values, grid, config.frame, t, path, model),
                frame=config.frame,
                values=values.copy() if keep else None,
            )
        )

    values = initial.values.copy()
    record(k0, values, True)
    first = traj.snapshots[0].summary
    grad_cap, amp_cap = blowup_caps(config.thresholds, grid, first.grad_ratio, first.amp_ratio)

    for k in range(k0, n_steps):
        j0, j1 = k * stride, (k + 1) * stride
        values = sfft.ifftn(sfft.fftn(values) * half)
        if physical:
            values = _phase_rotate(values, coefficient, model.alpha, dt)
            values = values * np.exp(path.W[j1] - path.W[j0] - model.mu_hat * dt)
        else:
            values = _phase_rotate(values, coefficient * _midpoint_gbm(path, model, j0, j1), model.alpha, dt)
        spectrum = sfft.fftn(values) * half
        values = sfft.ifftn(spectrum)

        with np.errstate(invalid="ignore", over="ignore"):
            mass = parseval * float(np.sum(np.abs(spectrum) ** 2))
            grad = math.sqrt(parseval * float(np.sum(deriv_sq * np.abs(spectrum) ** 2)))
            amp = float(np.max(np.abs(values)))
        norm = math.sqrt(mass) if mass >= 0 else float("nan")
        if not (math.isfinite(norm) and math.isfinite(grad) and math.isfinite(amp)):
            logger.warning(f"Non-finite field at t={(k + 1) * dt:.6g}")
            record(k + 1, values, True)
            break
        if norm > 0 and (grad / norm > grad_cap or amp / norm > amp_cap):
            logger.debug(f"Blow-up trigger at t={(k + 1) * dt:.6g}: grad ratio {grad / norm:.4g}, amp ratio {amp / norm:.4g}")
            record(k + 1, values, True)
            break
        step = k + 1
        if step % config.record_stride == 0 or step == n_steps or step == window_step:
            record(step, values, step in (n_steps, window_step))

    traj.outcome = classify_outcome(traj, config.thresholds)
    logger.debug(f"Trajectory finished at t={traj.final_time:.6g}: {traj.outcome.kind.value}")
    return traj


def rescaled_values(traj: TrajectoryRecord, snap: Snapshot) -> np.ndarray:
    if snap.frame == Frame.RESCALED:
        return snap.values
    j = traj.path.index_of(snap.time)
    model = traj.model
    return snap.values * np.exp(model.mu_hat * j * traj.path.dt - traj.path.W[j])


def scattering_residual(traj: TrajectoryRecord, t1: float, t2: float, relative: bool = True) -> float:
    """
    ||e^{-i t2 Delta} u(t2) - e^{-i t1 Delta} u(t1)|| for the rescaled-frame field,
    in L^2 (mass-critical) or H^1 (energy-critical); relative to the t1 profile by default.
    """
    if t2 < t1:
        raise InvalidParameterError(f"t1={t1} exceeds t2={t2}", parameter="t1")
    s1, s2 = traj.snapshot_at(t1), traj.snapshot_at(t2)
    if s1 is s2:
        return 0.0
    grid = traj.grid
    v1 = propagate_values(rescaled_values(traj, s1), grid, -s1.time)
    v2 = propagate_values(rescaled_values(traj, s2), grid, -s2.time)
    if traj.model.criticality == Criticality.ENERGY:
        norm_of = lambda v: h1_norm_values(v, grid)  # noqa: E731
    else:
        norm_of = lambda v: lp_norm(v, grid, 2)  # noqa: E731
    diff = norm_of(v2 - v1)
    if not relative:
        return diff
    reference = norm_of(v1)
    return diff / reference if reference > 0 else diff


def residual_series(traj: TrajectoryRecord) -> List[Optional[float]]:
    """Cauchy residual of each full snapshot against the previous full snapshot."""
    out: List[Optional[float]] = []
    previous = None
    for snap in traj.snapshots:
        if not snap.has_field or not snap.summary.is_finite:
            out.append(None)
            continue
        out.append(None if previous is None else scattering_residual(traj, previous, snap.time))
        previous = snap.time
    return out


def classify_outcome(traj: TrajectoryRecord, thresholds: BlowupThresholds) -> Outcome:
    first = traj.snapshots[0].summary
    grad_cap, amp_cap = blowup_caps(thresholds, traj.grid, first.grad_ratio, first.amp_ratio)
    finite = [s.summary for s in traj.snapshots if s.summary.is_finite]
    peaks = dict(
        peak_grad_ratio=max((s.grad_ratio for s in finite), default=0.0),
        peak_amp_ratio=max((s.amp_ratio for s in finite), default=0.0),
        grad_cap=grad_cap,
        amp_cap=amp_cap,
    )

    for snap in traj.snapshots:
        summary = snap.summary
        if not summary.is_finite:
            return Outcome(kind=OutcomeKind.BLOWUP, blowup_time=summary.time, trigger="non-finite", unstable=True, kind_loose=OutcomeKind.BLOWUP, **peaks)
        trigger = None
        if summary.grad_ratio > grad_cap:
            trigger = "gradient"
        elif summary.amp_ratio > amp_cap:
            trigger = "amplitude"
        if trigger:
            return Outcome(kind=OutcomeKind.BLOWUP, blowup_time=summary.time, trigger=trigger, kind_loose=OutcomeKind.BLOWUP, **peaks)

    t_end = traj.config.t_end
    if traj.final_time < t_end - TIME_TOL * max(1.0, t_end):
        return Outcome(kind=OutcomeKind.UNDECIDED, kind_loose=OutcomeKind.UNDECIDED, **peaks)

    window_start = t_end - thresholds.window_length(t_end)
    starts = [s.time for s in traj.full_snapshots() if s.time >= window_start - TIME_TOL]
    residual = scattering_residual(traj, starts[0], traj.final_time)
    kind = OutcomeKind.GLOBAL_SCATTERING if residual < thresholds.scatter_tol else OutcomeKind.UNDECIDED
    kind_loose = OutcomeKind.GLOBAL_SCATTERING if residual < thresholds.loose_tol else OutcomeKind.UNDECIDED
    return Outcome(kind=kind, scattering_residual=residual, kind_loose=kind_loose, **peaks)
