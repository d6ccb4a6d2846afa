"""
Sweeps, the martingale / frame-equivalence / virial audits and run persistence.
"""
from datetime import timedelta
import json
import math

import numpy as np
import pytest

from snls_lab.constants import Frame, OutcomeKind, ProfileKind
from snls_lab.database import get_db
from snls_lab.db.crud import sweep_run as crud
from snls_lab.db.schemas.experiments import SweepConfig
from snls_lab.db.schemas.solver import SolverConfig
from snls_lab.errors import CorruptManifestError, InvalidParameterError, VersionMismatchError
from snls_lab.numerics import experiments
from snls_lab.numerics.noise import BrownianPath, build_noise_model, sample_path
from snls_lab.numerics.profiles import gaussian, make_initial
from snls_lab.numerics.solver import integrate
from snls_lab.numerics.spectral import FieldState, make_grid


def small_sweep(**overrides) -> SweepConfig:
    data = dict(
        grid={"d": 1, "n": 64, "L": 40.0},
        alpha=5.0,
        lambda_sign=1,
        dt=1e-2,
        t_end=2.0,
        record_stride=10,
        c_norm_list=[0.0],
        n_paths=3,
        base_seed=11,
        profile=ProfileKind.GAUSSIAN,
        profile_params={"amplitude": 0.1},
    )
    data.update(overrides)
    return SweepConfig.model_validate(data)


# --- sweep ---------------------------------------------------------------

def test_noiseless_defocusing_sweep_scatters():
    report = experiments.run_sweep(small_sweep(), workers=1)
    summary = report.summaries[0]
    assert summary.p_hat == 1.0 and summary.n_global == summary.n_paths == 3
    assert summary.ci_lo < 1.0 == summary.ci_hi
    assert summary.certificate_fraction is None
    assert len({t.scattering_residual for t in report.trajectories}) == 1


def test_sweep_counts_and_seeds():
    sweep = small_sweep(c_norm_list=[0.0, 1.0, 2.0], n_paths=4, lambda_sign=-1)
    report = experiments.run_sweep(sweep, workers=1)
    assert len(report.trajectories) == 12
    for i, summary in enumerate(report.summaries):
        assert summary.n_global + summary.n_blowup + summary.n_undecided == summary.n_paths == 4
        assert summary.ci_lo <= summary.p_hat <= summary.ci_hi
        assert summary.strength == sweep.c_norm_list[i]
    assert [t.seed for t in report.trajectories[:4]] == [[11, 0, j] for j in range(4)]
    assert report.config_hash == sweep.config_hash()
    assert report.summary_for(2.0).strength == 2.0


def test_sweep_is_independent_of_worker_count():
    sweep = small_sweep(c_norm_list=[0.0, 1.0], n_paths=3, lambda_sign=-1, t_end=1.0)
    serial = experiments.run_sweep(sweep, workers=1)
    parallel = experiments.run_sweep(sweep, workers=2)
    assert [t.model_dump() for t in serial.trajectories] == [t.model_dump() for t in parallel.trajectories]
    assert [s.model_dump() for s in serial.summaries] == [s.model_dump() for s in parallel.summaries]
    assert serial.run_id != parallel.run_id


def test_strong_noise_prevents_blowup():
    sweep = SweepConfig(
        grid={"d": 1, "n": 512, "L": 40.0},
        alpha=5.0,
        dt=1e-3,
        t_end=2.0,
        c_norm_list=[0.0, 16.0],
        n_paths=2,
    )
    report = experiments.run_sweep(sweep, workers=1)
    quiet, strong = report.summary_for(0.0), report.summary_for(16.0)
    assert quiet.n_blowup == 2 and quiet.p_hat == 0.0
    assert strong.n_global == 2 and strong.p_hat == 1.0
    assert all(t.frame == Frame.RESCALED for t in report.trajectories if t.strength == 16.0)
    assert all(t.frame == Frame.PHYSICAL for t in report.trajectories if t.strength == 0.0)


@pytest.mark.slow
def test_regularization_by_noise_curve():
    sweep = SweepConfig(
        grid={"d": 1, "n": 512, "L": 40.0},
        alpha=5.0,
        dt=1e-3,
        t_end=10.0,
        c_norm_list=[0.0, 1.0, 4.0, 16.0],
        n_paths=200,
        profile=ProfileKind.SOLITON_SCALED,
        profile_params={"factor": 1.1},
    )
    report = experiments.run_sweep(sweep)
    summaries = report.summaries
    assert summaries[0].p_hat == 0.0
    assert summaries[-1].p_hat >= 0.8
    # non-decreasing up to the Wilson intervals
    for weaker, stronger in zip(summaries, summaries[1:]):
        assert stronger.p_hat >= weaker.p_hat or stronger.ci_hi >= weaker.ci_lo


def _flat_path(strength: float, n_steps: int = 200) -> BrownianPath:
    return BrownianPath(dt=1e-2, increments=np.zeros((n_steps, 1)), phi=(strength,))


def test_integration_frame_falls_back_when_x_leaves_float_range():
    strong = build_noise_model([16.0], 5.0, -1, 1)
    mild = build_noise_model([1.0], 5.0, -1, 1)
    assert experiments.integration_frame(_flat_path(16.0), strong) == Frame.RESCALED
    assert experiments.integration_frame(_flat_path(1.0), mild) == Frame.PHYSICAL


def test_good_event_certificate():
    sweep = small_sweep(c_norm_list=[16.0])
    model = experiments.strength_model(sweep, 16.0)
    initial = make_initial(sweep.profile, sweep.grid, model, **sweep.profile_params)
    calm = _flat_path(16.0)
    assert experiments.good_event_certificate(sweep, calm, model, initial) is True
    kicked = np.zeros((200, 1))
    kicked[0, 0] = 1.0
    spiky = BrownianPath(dt=1e-2, increments=kicked, phi=(16.0,))
    assert experiments.good_event_certificate(sweep, spiky, model, initial) is False
    quiet = experiments.strength_model(sweep, 0.0)
    assert experiments.good_event_certificate(sweep, calm, quiet, initial) is None


def test_strength_model_uses_a_single_real_mode():
    sweep = small_sweep()
    assert experiments.strength_model(sweep, 3.0).phi == (3.0,)
    assert experiments.strength_model(sweep, 0.0).phi == ()


def test_sweep_config_rejects_negative_strength():
    with pytest.raises(ValueError):
        small_sweep(c_norm_list=[-1.0])


# --- audits --------------------------------------------------------------

def test_martingale_audit():
    model = build_noise_model([0.3 + 0.4j], 5.0, -1, 1)
    report = experiments.martingale_audit(model, 500, [0.5, 1.0], seed=2, workers=1)
    assert report.c_norm == pytest.approx(0.3)
    for cp in report.checkpoints:
        assert cp.max_identity_error <= 1e-10
        assert cp.mean_within_3se
        assert cp.correlation_within_3se
    assert report.passed


@pytest.mark.slow
def test_martingale_audit_full_size():
    model = build_noise_model([1.0], 5.0, -1, 1)
    report = experiments.martingale_audit(model, 10_000, [0.25, 0.5], seed=0)
    assert report.passed


def test_martingale_audit_conservative_noise_is_exact():
    model = build_noise_model([0.8j], 5.0, -1, 1)
    report = experiments.martingale_audit(model, 20, [0.0, 0.5], seed=1, workers=1)
    assert all(cp.max_identity_error <= 1e-13 for cp in report.checkpoints)
    assert report.checkpoints[0].t == 0.0
    with pytest.raises(InvalidParameterError):
        experiments.martingale_audit(model, 1, [0.5], seed=1)
    with pytest.raises(InvalidParameterError):
        experiments.martingale_audit(model, 4, [0.005], seed=1)


@pytest.mark.parametrize("phi", [[], [0.6j]])
def test_frames_agree_without_real_noise(phi):
    grid = make_grid(1, 64, 20.0)
    model = build_noise_model(phi, 5.0, -1, 1)
    config = SolverConfig(grid=grid, model=model, dt=4e-2, t_end=0.4)
    path = sample_path(model, 1e-2, 0.4, 4)
    table = experiments.equivalence_audit(config, path, [4e-2, 2e-2, 1e-2])
    assert max(r.error for r in table.rows) <= 1e-10


def test_frames_converge_under_noise():
    grid = make_grid(1, 128, 40.0)
    model = build_noise_model([2.0], 5.0, -1, 1)
    config = SolverConfig(grid=grid, model=model, dt=4e-3, t_end=1.0)
    path = sample_path(model, 5e-4, 1.0, 7)
    table = experiments.equivalence_audit(config, path, [4e-3, 2e-3, 1e-3, 5e-4])
    assert [r.dt for r in table.rows] == [4e-3, 2e-3, 1e-3, 5e-4]
    assert table.rows[0].ratio is None
    assert table.rows[-1].error > 0
    assert table.overall_reduction <= 0.5


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_frames_converge_ratio_per_halving(seed):
    grid = make_grid(1, 256, 40.0)
    model = build_noise_model([2.0], 5.0, -1, 1)
    config = SolverConfig(grid=grid, model=model, dt=4e-3, t_end=1.0)
    path = sample_path(model, 5e-4, 1.0, seed)
    assert experiments.equivalence_audit(config, path, [4e-3, 2e-3, 1e-3, 5e-4]).converged


def test_equivalence_audit_requires_halving_ladder():
    grid = make_grid(1, 64, 20.0)
    model = build_noise_model([1.0], 5.0, -1, 1)
    config = SolverConfig(grid=grid, model=model, dt=4e-2, t_end=0.4)
    path = sample_path(model, 1e-2, 0.4, 0)
    with pytest.raises(InvalidParameterError):
        experiments.equivalence_audit(config, path, [4e-2, 1e-2])


def _deterministic(grid, values, dt, t_end, lambda_sign, record_stride):
    model = build_noise_model([], 5.0, lambda_sign, 1)
    config = SolverConfig(grid=grid, model=model, dt=dt, t_end=t_end, record_stride=record_stride)
    return integrate(config, sample_path(model, dt, t_end, 0), FieldState(grid=grid, values=values))


def test_virial_of_free_gaussian():
    grid = make_grid(1, 256, 40.0)
    traj = _deterministic(grid, gaussian(grid), 1e-2, 1.0, 0, 10)
    series = experiments.virial_track(traj)
    exact = [0.5 * math.sqrt(math.pi) * (1 + 4 * t ** 2) for t in series.times]
    np.testing.assert_allclose(series.virial, exact, rtol=1e-4)
    assert not series.contaminated


def test_virial_of_soliton_is_constant():
    grid = make_grid(1, 256, 40.0)
    model = build_noise_model([], 5.0, -1, 1)
    q = make_initial(ProfileKind.GROUND_STATE, grid, model).values
    traj = _deterministic(grid, q, 1e-3, 0.5, -1, 100)
    series = experiments.virial_track(traj)
    np.testing.assert_allclose(series.virial, series.virial[0], rtol=1e-3)


def test_virial_decreases_before_blowup():
    grid = make_grid(1, 512, 40.0)
    model = build_noise_model([], 5.0, -1, 1)
    initial = make_initial(ProfileKind.SOLITON_SCALED, grid, model, factor=1.1)
    traj = _deterministic(grid, initial.values, 1e-3, 2.0, -1, 50)
    assert traj.outcome.kind == OutcomeKind.BLOWUP
    series = experiments.virial_track(traj)
    assert len(series.virial) > 3
    assert all(b < a for a, b in zip(series.virial, series.virial[1:]))


def test_virial_flags_boundary_contamination():
    grid = make_grid(1, 128, 40.0)
    traj = _deterministic(grid, gaussian(grid, 1.0, 8.0), 1e-2, 0.1, 0, 5)
    assert experiments.virial_track(traj).contaminated


# --- persistence ---------------------------------------------------------

@pytest.fixture
def persisted(tmp_path):
    report = experiments.run_sweep(small_sweep(n_paths=2, snapshot_paths=1, t_end=0.5), workers=1)
    run_dir = tmp_path / "run"
    experiments.persist_run(report, run_dir)
    return report, run_dir


def test_run_round_trip(persisted):
    report, run_dir = persisted
    loaded = experiments.load_run(run_dir)
    assert loaded.model_dump() == report.model_dump()
    assert loaded.created_at.utcoffset() == timedelta(0)
    assert set(loaded._final_fields) == set(report.snapshot_files) == {"snapshots/s0_p0.snls"}
    np.testing.assert_array_equal(
        loaded._final_fields["snapshots/s0_p0.snls"].values, report._final_fields["snapshots/s0_p0.snls"].values
    )
    header = (run_dir / experiments.SUMMARY).read_text().splitlines()[0]
    assert header == "strength,p_hat,ci_lo,ci_hi,n_blowup,n_undecided"
    lines = (run_dir / experiments.TRAJECTORIES).read_text().splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["seed"] == [11, 0, 0]


def test_registry_rows(persisted):
    report, run_dir = persisted
    db = next(get_db(run_dir))
    try:
        runs = crud.get_all_sweep_runs(db)
        assert [r.run_id for r in runs] == [report.run_id]
        assert len(crud.get_sweep_runs_by_hash(db, report.config_hash)) == 1
        assert [t.path_index for t in runs[0].trajectories] == [0, 1]
        assert crud.delete_sweep_run(db, report.run_id)
        assert crud.get_sweep_run(db, report.run_id) is None
    finally:
        db.close()
    with pytest.raises(CorruptManifestError):
        experiments.load_run(run_dir)


def test_missing_snapshot_is_corrupt(persisted):
    report, run_dir = persisted
    (run_dir / report.snapshot_files[0]).unlink()
    with pytest.raises(CorruptManifestError):
        experiments.load_run(run_dir)


def test_unreadable_manifest_is_corrupt(persisted):
    _, run_dir = persisted
    (run_dir / experiments.MANIFEST).write_text("{not json")
    with pytest.raises(CorruptManifestError):
        experiments.load_run(run_dir)


def test_extra_trajectory_line_is_corrupt(persisted):
    _, run_dir = persisted
    with open(run_dir / experiments.TRAJECTORIES, "a") as fh:
        fh.write('{"extra": true}\n')
    with pytest.raises(CorruptManifestError):
        experiments.load_run(run_dir)


@pytest.mark.parametrize("key, value", [("config_hash", "0" * 64), ("schema_version", 1)])
def test_tampered_manifest_is_a_version_mismatch(persisted, key, value):
    _, run_dir = persisted
    manifest = json.loads((run_dir / experiments.MANIFEST).read_text())
    manifest[key] = value
    (run_dir / experiments.MANIFEST).write_text(json.dumps(manifest))
    with pytest.raises(VersionMismatchError):
        experiments.load_run(run_dir)
