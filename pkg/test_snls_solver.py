"""
Split-step solver in both frames: substeps, mass identities, the soliton,
blow-up and scattering classification.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from snls_lab.constants import Frame, OutcomeKind, ProfileKind, get_profile_config
from snls_lab.db.schemas.solver import BlowupThresholds, SolverConfig
from snls_lab.errors import FrameMismatchError, InvalidParameterError, MeshMismatchError, MissingSnapshotError, OffMeshError
from snls_lab.numerics import solver
from snls_lab.numerics.noise import build_noise_model, sample_path
from snls_lab.numerics.profiles import gaussian, ground_state, ground_state_residual, make_initial, soliton_q
from snls_lab.numerics.spectral import FieldState, free_propagate, lp_norm, make_grid


def _run(grid, phi, dt, t_end, frame=Frame.PHYSICAL, lambda_sign=-1, seed=0, values=None, **config):
    model = build_noise_model(phi, 5.0, lambda_sign, grid.d)
    path = sample_path(model, dt, t_end, seed)
    cfg = SolverConfig(grid=grid, model=model, dt=dt, t_end=t_end, frame=frame, **config)
    initial = FieldState(grid=grid, values=gaussian(grid) if values is None else values, frame=frame)
    return solver.integrate(cfg, path, initial)


def test_phase_step_solves_scalar_ode():
    grid = make_grid(1, 16, 10.0)
    model = build_noise_model([], 5.0, -1, 1)
    a = 0.7 + 0.2j
    f = FieldState(grid=grid, values=np.full(grid.shape, a))
    h, dt = 2.5, 0.01
    out = solver.nonlinear_phase_step(f, h, dt, model)
    assert_allclose(out.values, a * np.exp(1j * h * dt * abs(a) ** 4), rtol=1e-14)
    assert_allclose(np.abs(out.values), abs(a), rtol=1e-14)


def test_noise_multiplier_changes_mass_by_the_martingale_factor():
    grid = make_grid(1, 32, 10.0)
    model = build_noise_model([1.0, 0.5 - 0.3j], 5.0, -1, 1)
    path = sample_path(model, 1e-2, 1.0, 4)
    f = FieldState(grid=grid, values=gaussian(grid), time=0.2)
    out = solver.noise_multiplier_step(f, path, model, 0.2, 0.5)
    expected = math.exp(2 * (path.M_at(0.5) - path.M_at(0.2)) - 2 * model.c_norm ** 2 * 0.3)
    ratio = lp_norm(out.values, grid, 2) ** 2 / lp_norm(f.values, grid, 2) ** 2
    assert ratio == pytest.approx(expected, rel=1e-13)
    assert out.time == pytest.approx(0.5)


@pytest.mark.parametrize("c_norm", [0.5, 2.0])
def test_physical_frame_mass_identity(c_norm):
    grid = make_grid(1, 64, 20.0)
    for seed in range(3):
        traj = _run(grid, [c_norm], 1e-2, 1.0, seed=seed, record_stride=10)
        mass0 = traj.snapshots[0].summary.mass
        for snap in traj.snapshots:
            expected = mass0 * math.exp(2 * traj.path.M_at(snap.time) - 2 * c_norm ** 2 * snap.time)
            assert snap.summary.mass == pytest.approx(expected, rel=1e-10)


def test_rescaled_frame_conserves_mass():
    grid = make_grid(1, 64, 20.0)
    traj = _run(grid, [1.5, 0.5j], 1e-2, 1.0, frame=Frame.RESCALED, record_stride=10)
    masses = [s.summary.mass for s in traj.snapshots]
    assert_allclose(masses, masses[0], rtol=1e-10)


def test_linear_trajectory_is_free_propagation():
    grid = make_grid(1, 128, 40.0)
    traj = _run(grid, [], 1e-2, 1.0, lambda_sign=0, record_stride=50)
    exact = free_propagate(FieldState(grid=grid, values=gaussian(grid)), 1.0)
    assert_allclose(traj.final_field().values, exact.values, atol=1e-12)


def test_ground_state_residual():
    # wide enough that the periodic kink of Q at the box edge is below 1e-12
    grid = make_grid(1, 1024, 60.0)
    assert ground_state_residual(soliton_q(grid), grid, 5.0) <= 1e-8


def test_soliton_is_stationary():
    grid = make_grid(1, 512, 40.0)
    model = build_noise_model([], 5.0, -1, 1)
    q = np.asarray(ground_state(grid, 5.0))
    dt, t_end = 1e-4, 1.0
    cfg = SolverConfig(grid=grid, model=model, dt=dt, t_end=t_end, record_stride=1000)
    traj = solver.integrate(cfg, sample_path(model, dt, t_end, 0), FieldState(grid=grid, values=q))
    q_norm = lp_norm(q, grid, 2)
    for snap in traj.full_snapshots():
        assert lp_norm(np.abs(snap.values) - q, grid, 2) / q_norm <= 1e-4
    assert traj.outcome.kind != OutcomeKind.BLOWUP


def test_super_threshold_soliton_blows_up():
    grid = make_grid(1, 512, 40.0)
    model = build_noise_model([], 5.0, -1, 1)
    times = []
    for dt in (1e-3, 5e-4):
        cfg = SolverConfig(grid=grid, model=model, dt=dt, t_end=2.0, record_stride=50, snapshot_fields=False)
        initial = make_initial(ProfileKind.SOLITON_SCALED, grid, model, factor=1.1)
        traj = solver.integrate(cfg, sample_path(model, dt, 2.0, 0), initial)
        assert traj.outcome.kind == OutcomeKind.BLOWUP
        times.append(traj.outcome.blowup_time)
    assert times[0] < 1.0
    assert abs(times[0] - times[1]) <= 0.05


def test_non_finite_field_classifies_as_unstable_blowup():
    grid = make_grid(1, 64, 20.0)
    model = build_noise_model([], 5.0, -1, 1)
    cfg = SolverConfig(grid=grid, model=model, dt=1e-2, t_end=0.1)
    # |u|^4 overflows on the first phase rotation
    traj = solver.integrate(cfg, sample_path(model, 1e-2, 0.1, 0), FieldState(grid=grid, values=1e80 * gaussian(grid)))
    assert traj.outcome.kind == OutcomeKind.BLOWUP
    assert traj.outcome.unstable and traj.outcome.trigger == "non-finite"


def test_explicit_gradient_cap_triggers():
    grid = make_grid(1, 64, 20.0)
    traj = _run(grid, [], 1e-2, 0.5, thresholds=BlowupThresholds(grad_cap=0.5))
    assert traj.outcome.kind == OutcomeKind.BLOWUP
    assert traj.outcome.trigger == "gradient"
    assert traj.final_time == pytest.approx(1e-2)


def test_integrate_rejects_mismatches():
    grid = make_grid(1, 64, 20.0)
    model = build_noise_model([1.0], 5.0, -1, 1)
    cfg = SolverConfig(grid=grid, model=model, dt=1e-3, t_end=0.1)
    initial = FieldState(grid=grid, values=gaussian(grid), frame=Frame.RESCALED)
    with pytest.raises(FrameMismatchError):
        solver.integrate(cfg, sample_path(model, 1e-3, 0.1, 0), initial)
    other = make_grid(1, 32, 20.0)
    with pytest.raises(MeshMismatchError):
        solver.integrate(cfg, sample_path(model, 1e-3, 0.1, 0), FieldState(grid=other, values=gaussian(other)))
    with pytest.raises(OffMeshError):
        solver.integrate(cfg, sample_path(model, 3e-3, 0.3, 0), FieldState(grid=grid, values=gaussian(grid)))
    with pytest.raises(OffMeshError):
        solver.integrate(cfg, sample_path(model, 1e-3, 0.05, 0), FieldState(grid=grid, values=gaussian(grid)))


@pytest.mark.parametrize("frame", [Frame.PHYSICAL, Frame.RESCALED])
def test_integrate_restarts_from_a_recorded_time(frame):
    grid = make_grid(1, 128, 40.0)
    model = build_noise_model([1.0], 5.0, -1, 1)
    path = sample_path(model, 1e-2, 1.0, 6)
    cfg = SolverConfig(grid=grid, model=model, dt=1e-2, t_end=1.0, frame=frame, record_stride=10)
    initial = FieldState(grid=grid, values=gaussian(grid, 0.5), frame=frame)
    full = solver.integrate(cfg, path, initial)
    resumed = solver.integrate(cfg, path, full.field_at(0.5))
    assert resumed.snapshots[0].time == pytest.approx(0.5)
    assert np.array_equal(resumed.final_field().values, full.final_field().values)
    with pytest.raises(OffMeshError):
        solver.integrate(cfg, path, initial.evolve(initial.values, time=0.505))
    with pytest.raises(OffMeshError):
        solver.integrate(cfg, path, initial.evolve(initial.values, time=1.0))


def test_self_convergence_is_second_order():
    grid = make_grid(1, 256, 40.0)
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        traj = _run(grid, [], dt, 0.4, record_stride=10_000)
        finals.append(traj.final_field().values)
    e1 = lp_norm(finals[0] - finals[1], grid, 2)
    e2 = lp_norm(finals[1] - finals[2], grid, 2)
    assert e2 / e1 <= 0.65


def test_free_trajectory_scatters():
    grid = make_grid(1, 128, 40.0)
    traj = _run(grid, [], 1e-2, 1.0, lambda_sign=0, record_stride=25)
    assert traj.outcome.kind == OutcomeKind.GLOBAL_SCATTERING
    assert traj.outcome.scattering_residual <= 1e-12
    assert solver.scattering_residual(traj, 0.5, 0.5) == 0.0


def test_defocusing_residual_decreases_along_windows():
    grid = make_grid(1, 256, 80.0)
    traj = _run(grid, [], 1e-2, 4.0, lambda_sign=1, values=0.8 * gaussian(grid), record_stride=100)
    residuals = [solver.scattering_residual(traj, t, t + 1.0) for t in (1.0, 2.0, 3.0)]
    assert residuals[0] > residuals[1] > residuals[2]


def test_residual_series_and_missing_snapshots():
    grid = make_grid(1, 64, 20.0)
    traj = _run(grid, [1.0], 1e-2, 0.5, record_stride=10, snapshot_fields=False)
    with pytest.raises(MissingSnapshotError):
        traj.field_at(0.2)
    with pytest.raises(MissingSnapshotError):
        traj.sampled_fields()
    full = _run(grid, [1.0], 1e-2, 0.5, lambda_sign=1, record_stride=10)
    series = solver.residual_series(full)
    assert series[0] is None and all(r is not None and r >= 0 for r in series[1:])


def test_profile_defaults_and_unknown_parameters():
    grid = make_grid(1, 256, 40.0)
    model = build_noise_model([], 5.0, -1, 1)
    assert set(get_profile_config(ProfileKind.GAUSSIAN)) == {"name", "description", "default_config"}
    plain = make_initial(ProfileKind.GAUSSIAN, grid, model)
    assert_allclose(plain.values, gaussian(grid), rtol=0, atol=0)
    with pytest.raises(InvalidParameterError, match="unknown Gaussian parameters"):
        make_initial(ProfileKind.GAUSSIAN, grid, model, factor=2.0)
