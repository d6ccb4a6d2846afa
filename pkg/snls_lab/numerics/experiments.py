"""
Monte Carlo orchestration: the noise-strength sweep, the mass-martingale,
frame-equivalence and virial audits, and persistence of sweep runs.
"""
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import csv
import json
import logging
import math
import uuid

import numpy as np

import snls_lab
from snls_lab.constants import Criticality, Frame, OutcomeKind, Regime, ThresholdConfig
from snls_lab.database import get_db
from snls_lab.db.crud import sweep_run as crud
from snls_lab.db.schemas.experiments import (
    EquivalenceRow,
    EquivalenceTable,
    StrengthSummary,
    SweepConfig,
    SweepReport,
    TrajectoryOutcomeRecord,
    VirialSeries,
)
from snls_lab.db.schemas.noise import MartingaleAuditReport, MartingaleCheckpoint
from snls_lab.db.schemas.solver import SolverConfig
from snls_lab.db.schemas.spectral import GridSpec
from snls_lab.dependencies import get_workers
from snls_lab.errors import CorruptManifestError, InvalidParameterError, SNLSError, VersionMismatchError
from snls_lab.numerics.noise import (
    BrownianPath,
    NoiseModel,
    build_noise_model,
    gbm_series,
    sample_path,
    sup_bound_quantile,
    wilson_interval,
)
from snls_lab.numerics.picard import solve_budget
from snls_lab.numerics.profiles import gaussian, make_initial, radius_squared
from snls_lab.numerics.snapshot_io import read_snapshot, write_snapshot
from snls_lab.numerics.solver import NO_TRIGGER, TrajectoryRecord, integrate, rescaled_values
from snls_lab.numerics.spectral import FieldState, coordinates, h1_norm_values, lp_norm, make_grid

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRAJECTORIES = "trajectories.jsonl"
SUMMARY = "summary.csv"
CURVE = "curve.csv"
SNAPSHOT_DIR = "snapshots"

# Largest |M(t) - ||c||^2 t| integrated in the physical frame; beyond it X under- or overflows.
PHYSICAL_LOG_RANGE = 300.0


def _utc(stamp: datetime) -> datetime:
    # SQLite hands DateTime columns back naive; runs are stamped in UTC
    return stamp.replace(tzinfo=timezone.utc) if stamp.tzinfo is None else stamp


def _pool_map(fn, tasks: list, workers: Optional[int]) -> list:
    workers = min(get_workers(workers), len(tasks)) or 1
    if workers > 1:
        with Pool(workers) as pool:
            return pool.map(fn, tasks)
    return list(map(fn, tasks))


# --- sweep ---------------------------------------------------------------

def strength_model(sweep: SweepConfig, strength: float) -> NoiseModel:
    """Single real mode phi = (s,), so ||c|| = s; strength 0 carries no noise."""
    phi = [strength] if strength > 0 else []
    return build_noise_model(phi, sweep.alpha, sweep.lambda_sign, sweep.d)


def trajectory_seed(sweep: SweepConfig, strength_index: int, path_index: int) -> List[int]:
    return [sweep.base_seed, strength_index, path_index]


def good_event_certificate(sweep: SweepConfig, path: BrownianPath, model: NoiseModel, initial: FieldState) -> Optional[bool]:
    """
    Whether the sampled h_c meets the sufficient condition for global existence:
    sup h_c <= A on the horizon and sup h_c <= epsilon after 1/||c||, with epsilon
    the large-time budget for data of size ||X_0|| + 1.
    """
    s = model.c_norm
    if s == 0:
        return None
    A = sup_bound_quantile(sweep.alpha, sweep.certificate_eta)
    if model.criticality == Criticality.ENERGY:
        size = h1_norm_values(initial.values, initial.grid) + 1
        budget = solve_budget(Regime.ENERGY_LARGE_TIME, size, sweep.certificate_C, sweep.d)
    else:
        size = lp_norm(initial.values, initial.grid, 2) + 1
        budget = solve_budget(Regime.MASS_LARGE_TIME, size, sweep.certificate_C, sweep.d)
    h = gbm_series(path, model)
    late = path.times >= 1.0 / s
    return bool(h.max() <= A and (not late.any() or h[late].max() <= budget.epsilon))


def integration_frame(path: BrownianPath, model: NoiseModel) -> Frame:
    """Physical frame unless the X -> u multiplier leaves the floating-point range on this path."""
    log_modulus = path.M - model.c_norm ** 2 * path.times
    return Frame.PHYSICAL if np.max(np.abs(log_modulus)) <= PHYSICAL_LOG_RANGE else Frame.RESCALED


def _run_trajectory(task: Tuple[dict, int, int]) -> Dict[str, Any]:
    sweep_data, i, j = task
    sweep = SweepConfig.model_validate(sweep_data)
    strength = sweep.c_norm_list[i]
    seed = trajectory_seed(sweep, i, j)
    record: Dict[str, Any] = dict(strength=strength, strength_index=i, path_index=j, seed=seed)
    try:
        model = strength_model(sweep, strength)
        path = sample_path(model, sweep.dt, sweep.t_end, seed)
        frame = integration_frame(path, model)
        initial = make_initial(sweep.profile, sweep.grid, model, frame, **sweep.profile_params)
        config = SolverConfig(
            grid=sweep.grid,
            model=model,
            dt=sweep.dt,
            t_end=sweep.t_end,
            frame=frame,
            record_stride=sweep.record_stride,
            thresholds=sweep.thresholds,
            snapshot_fields=False,
        )
        traj = integrate(config, path, initial)
        outcome = traj.outcome
        record.update(
            frame=frame,
            kind=outcome.kind,
            kind_loose=outcome.kind_loose,
            blowup_time=outcome.blowup_time,
            unstable=outcome.unstable,
            scattering_residual=outcome.scattering_residual,
            peak_grad_ratio=outcome.peak_grad_ratio,
            certificate=good_event_certificate(sweep, path, model, initial),
        )
        if j < sweep.snapshot_paths:
            record["final_field"] = traj.final_field()
    except (SNLSError, ValueError, ArithmeticError, MemoryError) as e:
        logger.warning(f"Trajectory s={strength} path={j} failed: {e}")
        record.update(kind=OutcomeKind.UNDECIDED, kind_loose=OutcomeKind.UNDECIDED, error=f"{type(e).__name__}: {e}")
    return record


def summarize_strength(strength: float, records: Sequence[TrajectoryOutcomeRecord]) -> StrengthSummary:
    n = len(records)
    n_global = sum(r.kind == OutcomeKind.GLOBAL_SCATTERING for r in records)
    n_blowup = sum(r.kind == OutcomeKind.BLOWUP for r in records)
    n_global_loose = sum(r.kind_loose == OutcomeKind.GLOBAL_SCATTERING for r in records)
    lo, hi = wilson_interval(n_global, n)
    lo_loose, hi_loose = wilson_interval(n_global_loose, n)
    peaks = [r.peak_grad_ratio for r in records if r.peak_grad_ratio is not None]
    certificates = [r.certificate for r in records if r.certificate is not None]
    return StrengthSummary(
        strength=strength,
        n_paths=n,
        n_global=n_global,
        n_blowup=n_blowup,
        n_undecided=n - n_global - n_blowup,
        n_failed=sum(r.error is not None for r in records),
        n_global_loose=n_global_loose,
        p_hat=n_global / n,
        ci_lo=lo,
        ci_hi=hi,
        p_hat_loose=n_global_loose / n,
        ci_lo_loose=lo_loose,
        ci_hi_loose=hi_loose,
        mean_peak_grad=float(np.mean(peaks)) if peaks else None,
        max_peak_grad=float(np.max(peaks)) if peaks else None,
        certificate_fraction=float(np.mean(certificates)) if certificates else None,
    )


def run_sweep(sweep: SweepConfig, workers: Optional[int] = None) -> SweepReport:
    """
    Integrate n_paths trajectories per strength (physical frame unless X leaves
    the float range) and estimate P(GlobalScattering) with Wilson intervals.
    Results depend only on the config.
    """
    tasks = [
        (sweep.model_dump(mode="json"), i, j)
        for i in range(len(sweep.c_norm_list))
        for j in range(sweep.n_paths)
    ]
    logger.info(f"Sweep over strengths {sweep.c_norm_list} with {sweep.n_paths} paths each ({len(tasks)} trajectories)")
    results = _pool_map(_run_trajectory, tasks, workers)

    final_fields: Dict[str, FieldState] = {}
    records: List[TrajectoryOutcomeRecord] = []
    for result in results:
        field = result.pop("final_field", None)
        if field is not None:
            name = f"{SNAPSHOT_DIR}/s{result['strength_index']}_p{result['path_index']}.snls"
            result["snapshot_file"] = name
            final_fields[name] = field
        records.append(TrajectoryOutcomeRecord(**result))

    summaries = []
    for i, strength in enumerate(sweep.c_norm_list):
        summary = summarize_strength(strength, [r for r in records if r.strength_index == i])
        logger.info(
            f"s={strength:g}: P(global)={summary.p_hat:.3f} [{summary.ci_lo:.3f}, {summary.ci_hi:.3f}], "
            f"blowup={summary.n_blowup}, undecided={summary.n_undecided}"
        )
        summaries.append(summary)

    report = SweepReport(
        run_id=uuid.uuid4().hex,
        config=sweep,
        config_hash=sweep.config_hash(),
        code_version=snls_lab.__version__,
        schema_version=snls_lab.SCHEMA_VERSION,
        created_at=datetime.now(timezone.utc),
        summaries=summaries,
        trajectories=records,
        snapshot_files=sorted(final_fields),
    )
    report._final_fields = final_fields
    return report


# --- audits --------------------------------------------------------------

def _martingale_path(task: tuple) -> Tuple[np.ndarray, np.ndarray]:
    model_data, grid_data, dt, t_end, seed, initial, indices = task
    model = NoiseModel.from_dict(model_data)
    grid = GridSpec(**grid_data)
    path = sample_path(model, dt, t_end, seed)
    config = SolverConfig(
        grid=grid, model=model, dt=dt, t_end=t_end, record_stride=1, thresholds=NO_TRIGGER, snapshot_fields=False
    )
    traj = integrate(config, path, FieldState(grid=grid, values=initial))
    masses = np.array([traj.snapshots[k].summary.mass for k in indices])
    return masses, path.M[list(indices)]


def _within_3se(sample: np.ndarray, target: float) -> Tuple[float, float, bool]:
    mean = float(sample.mean())
    se = float(sample.std(ddof=1) / math.sqrt(sample.size)) if sample.size > 1 else 0.0
    return mean, se, abs(mean - target) <= 3 * se + 1e-12 * max(1.0, abs(target))


def martingale_audit(
    model: NoiseModel,
    n_paths: int,
    t_checkpoints: Sequence[float],
    seed: int,
    grid: Optional[GridSpec] = None,
    dt: float = 1e-2,
    workers: Optional[int] = None,
) -> MartingaleAuditReport:
    """
    Ensemble check that ||X(t)||^2 is the exponential martingale
    ||X_0||^2 exp(2M(t) - 2||c||^2 t), pathwise and in mean, with orthogonal increments.
    """
    if n_paths < 2:
        raise InvalidParameterError(f"need at least 2 paths, got {n_paths}", parameter="n_paths")
    if grid is None:
        grid = make_grid(model.d, 64 if model.d == 1 else 16, 20.0)
    checkpoints = sorted(float(t) for t in t_checkpoints)
    if not checkpoints or checkpoints[0] < 0:
        raise InvalidParameterError("checkpoints must be nonnegative", parameter="t_checkpoints")
    indices = [int(round(t / dt)) for t in checkpoints]
    if any(abs(k * dt - t) > 1e-9 * max(1.0, t) for k, t in zip(indices, checkpoints)):
        raise InvalidParameterError(f"checkpoints must be multiples of dt={dt}", parameter="t_checkpoints")
    n_steps = max(max(indices), 1)
    initial = gaussian(grid)
    mass0 = lp_norm(initial, grid, 2) ** 2

    tasks = [
        (model.to_dict(), grid.model_dump(), dt, n_steps * dt, [seed, i], initial, [0] + indices)
        for i in range(n_paths)
    ]
    results = _pool_map(_martingale_path, tasks, workers)
    masses = np.array([r[0] for r in results])     # (n_paths, 1 + n_checkpoints)
    M = np.array([r[1] for r in results])
    c_sq = model.c_norm ** 2

    report = MartingaleAuditReport(c_norm=model.c_norm, n_paths=n_paths, seed=seed, checkpoints=[])
    for col, t in enumerate(checkpoints, start=1):
        expected = mass0 * np.exp(2 * M[:, col] - 2 * c_sq * t)
        identity_error = float(np.max(np.abs(masses[:, col] - expected) / expected))
        mean_ratio, se, mean_ok = _within_3se(masses[:, col] / mass0, 1.0)

        previous, current = masses[:, col - 1], masses[:, col]
        product = (current - previous) * previous
        _, _, orthogonal = _within_3se(product, 0.0)
        spread = np.std(current - previous) * np.std(previous)
        correlation = float(np.mean(product - np.mean(current - previous) * np.mean(previous)) / spread) if spread > 0 else 0.0

        report.checkpoints.append(
            MartingaleCheckpoint(
                t=t,
                mean_mass_ratio=mean_ratio,
                standard_error=se,
                mean_within_3se=mean_ok,
                max_identity_error=identity_error,
                increment_correlation=correlation,
                correlation_within_3se=orthogonal,
            )
        )
        logger.debug(f"Martingale checkpoint t={t}: mean ratio {mean_ratio:.4f} +- {se:.4f}, identity err {identity_error:.2e}")
    return report


def _on_mesh(t: float, dt: float) -> bool:
    return abs(t / dt - round(t / dt)) < 1e-6


def equivalence_audit(
    config: SolverConfig,
    path: BrownianPath,
    dt_ladder: Sequence[float],
    initial: Optional[FieldState] = None,
) -> EquivalenceTable:
    """
    Self-convergence of SNLS-then-rescale against the random NLS on one path:
    err(dt) = max over checkpoints of ||rescale(X)(t) - u(t)||_2 / ||u(t)||_2.
    """
    ladder = sorted((float(dt) for dt in dt_ladder), reverse=True)
    if len(ladder) < 2 or any(abs(a / b - 2) > 1e-9 for a, b in zip(ladder, ladder[1:])):
        raise InvalidParameterError("dt_ladder must be a halving sequence", parameter="dt_ladder")
    if initial is None:
        initial = FieldState(grid=config.grid, values=gaussian(config.grid), frame=Frame.PHYSICAL)
    coarsest = ladder[0]

    rows: List[EquivalenceRow] = []
    for dt in ladder:
        stride = int(round(coarsest / dt))
        shared = dict(dt=dt, record_stride=stride, thresholds=NO_TRIGGER, snapshot_fields=True)
        physical = integrate(config.model_copy(update=dict(shared, frame=Frame.PHYSICAL)), path, initial.evolve(initial.values, frame=Frame.PHYSICAL))
        rescaled = integrate(config.model_copy(update=dict(shared, frame=Frame.RESCALED)), path, initial.evolve(initial.values, frame=Frame.RESCALED))
        # compare on the coarsest mesh only
        u_at = {int(round(s.time / coarsest)): s for s in rescaled.snapshots if _on_mesh(s.time, coarsest)}
        err = 0.0
        for x_snap in physical.snapshots:
            key = int(round(x_snap.time / coarsest))
            if not _on_mesh(x_snap.time, coarsest) or key not in u_at:
                continue
            u = u_at[key].values
            diff = lp_norm(rescaled_values(physical, x_snap) - u, config.grid, 2)
            err = max(err, diff / max(lp_norm(u, config.grid, 2), 1e-300))
        ratio = err / rows[-1].error if rows and rows[-1].error > 0 else None
        rows.append(EquivalenceRow(dt=dt, error=err, ratio=ratio))
        logger.info(f"Equivalence dt={dt:g}: err={err:.3e}" + (f", ratio {ratio:.3f}" if ratio is not None else ""))
    return EquivalenceTable(c_norm=config.model.c_norm, rows=rows)


def wrap_fraction(values: np.ndarray, grid: GridSpec, edge: float = ThresholdConfig.BOUNDARY["wrap_fraction"]) -> float:
    """Share of the mass within (0.5 - edge) L of the box boundary."""
    density = np.abs(values) ** 2
    total = float(density.sum())
    if total == 0:
        return 0.0
    near = np.zeros(grid.shape, dtype=bool)
    for x in coordinates(grid):
        near |= np.abs(x) > edge * grid.L
    return float(density[near].sum() / total)


def virial_track(traj: TrajectoryRecord, tol: float = ThresholdConfig.BOUNDARY["wrap_mass_tol"]) -> VirialSeries:
    """V(t) = int |x|^2 |u|^2 dx over the full snapshots of the rescaled field."""
    snaps = traj.full_snapshots()
    if not snaps:
        raise InvalidParameterError("trajectory holds no full snapshots", parameter="traj")
    grid = traj.grid
    r2 = radius_squared(grid)
    times, virial, fractions = [], [], []
    for snap in snaps:
        u = rescaled_values(traj, snap)
        times.append(snap.time)
        virial.append(grid.cell_volume * float(np.sum(r2 * np.abs(u) ** 2)))
        fractions.append(wrap_fraction(u, grid))
    contaminated = max(fractions) > tol
    if contaminated:
        logger.warning(f"⚠️ Boundary contamination: {max(fractions):.2e} of the mass near the box edge (tol {tol:g})")
    return VirialSeries(times=times, virial=virial, wrap_fractions=fractions, contaminated=contaminated)


# --- persistence ---------------------------------------------------------

def _manifest(report: SweepReport) -> dict:
    return {
        "run_id": report.run_id,
        "schema_version": report.schema_version,
        "code_version": report.code_version,
        "config_hash": report.config_hash,
        "created_at": report.created_at.isoformat(),
        "config": report.config.model_dump(mode="json"),
        "summaries": [s.model_dump(mode="json") for s in report.summaries],
        "trajectories": [
            {"seed": t.seed, "strength": t.strength, "path_index": t.path_index, "kind": t.kind.value}
            for t in report.trajectories
        ],
        "files": [TRAJECTORIES, SUMMARY, CURVE],
        "snapshot_files": list(report.snapshot_files),
    }


def _write_csv(path: Path, header: List[str], rows: List[list]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def persist_run(report: SweepReport, run_dir: Union[str, Path]) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, field in report._final_fields.items():
        (run_dir / name).parent.mkdir(parents=True, exist_ok=True)
        write_snapshot(run_dir / name, field)

    with open(run_dir / TRAJECTORIES, "w") as fh:
        for t in report.trajectories:
            fh.write(t.model_dump_json() + "\n")
    _write_csv(
        run_dir / SUMMARY,
        ["strength", "p_hat", "ci_lo", "ci_hi", "n_blowup", "n_undecided"],
        [[s.strength, s.p_hat, s.ci_lo, s.ci_hi, s.n_blowup, s.n_undecided] for s in report.summaries],
    )
    _write_csv(
        run_dir / CURVE,
        ["strength", "p_hat", "ci_lo", "ci_hi", "p_hat_loose", "ci_lo_loose", "ci_hi_loose", "certificate_fraction"],
        [
            [s.strength, s.p_hat, s.ci_lo, s.ci_hi, s.p_hat_loose, s.ci_lo_loose, s.ci_hi_loose, s.certificate_fraction]
            for s in report.summaries
        ],
    )
    with open(run_dir / MANIFEST, "w") as fh:
        json.dump(_manifest(report), fh, indent=2)

    db = next(get_db(run_dir))
    try:
        crud.create_sweep_run(db, report, run_dir=str(run_dir.resolve()))
    finally:
        db.close()
    logger.info(f"✅ Persisted run {report.run_id} to {run_dir}")
    return run_dir / MANIFEST


def load_run(run_dir: Union[str, Path]) -> SweepReport:
    """Read a run back from its registry, checking the manifest against it."""
    run_dir = Path(run_dir)
    try:
        manifest = json.loads((run_dir / MANIFEST).read_text())
        run_id = manifest["run_id"]
        stored_hash = manifest["config_hash"]
        schema_version = manifest["schema_version"]
        config = SweepConfig.model_validate(manifest["config"])
    except FileNotFoundError as e:
        raise CorruptManifestError(f"no manifest in {run_dir}") from e
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptManifestError(f"unreadable manifest in {run_dir}: {e}") from e

    if schema_version != snls_lab.SCHEMA_VERSION:
        raise VersionMismatchError(f"manifest schema {schema_version}, this build reads {snls_lab.SCHEMA_VERSION}", parameter="schema_version")
    if config.config_hash() != stored_hash:
        raise VersionMismatchError("config hash does not match the stored config", parameter="config_hash")
    for name in list(manifest.get("files", [])) + list(manifest.get("snapshot_files", [])):
        if not (run_dir / name).is_file():
            raise CorruptManifestError(f"file {name} referenced by the manifest is missing", parameter=name)

    db = next(get_db(run_dir))
    try:
        row = crud.get_sweep_run(db, run_id)
        if row is None:
            raise CorruptManifestError(f"run {run_id} is not in the registry")
        if row.config_hash != stored_hash or row.schema_version != schema_version:
            raise VersionMismatchError(f"registry entry for {run_id} disagrees with the manifest", parameter="config_hash")
        report = SweepReport(
            run_id=row.run_id,
            config=SweepConfig.model_validate(row.config),
            config_hash=row.config_hash,
            code_version=row.code_version,
            schema_version=row.schema_version,
            created_at=_utc(row.created_at),
            summaries=[StrengthSummary.model_validate(s) for s in row.summaries],
            trajectories=[TrajectoryOutcomeRecord.model_validate(t) for t in row.trajectories],
            snapshot_files=list(row.snapshot_files or []),
        )
    finally:
        db.close()

    with open(run_dir / TRAJECTORIES) as fh:
        n_lines = sum(1 for line in fh if line.strip())
    if n_lines != len(report.trajectories):
        raise CorruptManifestError(f"{TRAJECTORIES} holds {n_lines} records, registry holds {len(report.trajectories)}")
    report._final_fields = {name: read_snapshot(run_dir / name) for name in report.snapshot_files}
    return report
