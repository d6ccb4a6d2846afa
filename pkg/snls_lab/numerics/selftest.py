"""
Fast identity checks across every module; each check raises AssertionError
(or an SNLSError) on failure. `run_selftest` is what the `selftest` command runs.
"""
from pathlib import Path
from typing import Callable, Dict, List, Optional
import json
import logging
import math
import tempfile

import numpy as np

from snls_lab.constants import Direction, EstimateMethod, Frame, OutcomeKind, ProfileKind, Regime
from snls_lab.db.schemas.cli import SelftestResult
from snls_lab.db.schemas.experiments import SweepConfig
from snls_lab.db.schemas.solver import SolverConfig
from snls_lab.db.schemas.spectral import StrichartzSpec
from snls_lab.errors import CorruptManifestError, InvalidResolutionError, SNLSError, VersionMismatchError
from snls_lab.numerics import experiments, noise, picard, solver, spectral
from snls_lab.numerics.profiles import gaussian

logger = logging.getLogger(__name__)

CHECKS: Dict[str, Callable[[], None]] = {}


def check(name: str):
    def register(fn):
        CHECKS[name] = fn
        return fn
    return register


def _close(a: float, b: float, tol: float, what: str):
    scale = max(abs(b), 1e-300)
    assert abs(a - b) <= tol * scale, f"{what}: {a!r} vs {b!r} (tol {tol:g})"


def _grid():
    return spectral.make_grid(1, 64, 20.0)


def _field(grid, frame=Frame.PHYSICAL, time=0.0):
    (x,) = spectral.coordinates(grid)
    return spectral.FieldState(grid=grid, values=gaussian(grid) * np.exp(1j * x), frame=frame, time=time)


# --- spectral core -------------------------------------------------------

@check("grid arithmetic")
def _grid_arithmetic():
    g = spectral.make_grid(1, 8, 2 * math.pi)
    assert g.n_points == 8
    _close(g.spacing, math.pi / 4, 1e-15, "spacing")
    assert spectral.make_grid(3, 64, 40).n_points == 64 ** 3
    try:
        spectral.make_grid(2, 7, 10)
    except InvalidResolutionError:
        pass
    else:
        raise AssertionError("n=7 accepted")


@check("free propagation is unitary")
def _free_propagation():
    f = _field(_grid())
    assert np.array_equal(spectral.free_propagate(f, 0.0).values, f.values)
    _close(spectral.lebesgue_norm(spectral.free_propagate(f, 0.37), 2), spectral.lebesgue_norm(f, 2), 1e-12, "L2 after propagation")


@check("Lebesgue norms")
def _lebesgue():
    grid = _grid()
    ones = spectral.FieldState(grid=grid, values=np.ones(grid.shape))
    _close(spectral.lebesgue_norm(ones, 2), math.sqrt(grid.volume), 1e-12, "constant field")
    values = np.random.default_rng(0).standard_normal(grid.shape) + 0j
    _close(spectral.lp_norm(values, grid, 2), spectral.l2_norm_fourier(values, grid), 1e-10, "Parseval")


@check("H1 norms")
def _sobolev():
    grid = _grid()
    assert spectral.gradient_l2_norm(np.full(grid.shape, 3.0 + 0j), grid) <= 1e-12
    (x,) = spectral.coordinates(grid)
    a, xi = 2 - 1j, 2 * math.pi * 3 / grid.L
    mode = spectral.FieldState(grid=grid, values=a * np.exp(1j * xi * x))
    _close(spectral.sobolev_h1_norm(mode) ** 2, abs(a) ** 2 * grid.volume * (1 + xi ** 2), 1e-10, "single mode")


@check("space-time norms")
def _spacetime():
    grid = _grid()
    g = _field(grid).values
    times = np.linspace(0.0, 2.0, 11)
    spec = StrichartzSpec(q=6, p=6, t_a=0.0, t_b=2.0)
    _close(spectral.spacetime_norm_samples(times, [g] * 11, grid, spec), 2.0 ** (1 / 6) * spectral.lp_norm(g, grid, 6), 1e-12, "constant in time")
    empty = StrichartzSpec(q=6, p=6, t_a=1.0, t_b=1.0)
    assert spectral.spacetime_norm_samples(times, [g] * 11, grid, empty) == 0.0


# --- noise engine --------------------------------------------------------

@check("noise model constants")
def _noise_model():
    m = noise.build_noise_model([1j], 5.0, -1, 1)
    _close(m.mu, 0.5, 1e-15, "mu")
    assert m.mu_hat == 0 and m.c_norm == 0
    m = noise.build_noise_model([1 + 1j], 5.0, -1, 1)
    _close(m.mu, 1.0, 1e-15, "mu")
    assert abs(m.mu_hat - (1 + 1j)) <= 1e-15 and m.c_norm == 1.0


@check("Brownian paths")
def _paths():
    m = noise.build_noise_model([1 + 0.5j, -0.3j], 5.0, -1, 1)
    a = noise.sample_path(m, 1e-2, 1.0, [7, 1])
    b = noise.sample_path(m, 1e-2, 1.0, [7, 1])
    assert a.M[0] == 0 and a.W[0] == 0
    assert np.array_equal(a.increments, b.increments) and np.array_equal(a.W, b.W)


@check("geometric Brownian motion")
def _gbm():
    m = noise.build_noise_model([1.5], 5.0, -1, 1)
    path = noise.sample_path(m, 1e-2, 1.0, 3)
    assert noise.eval_gbm(path, m, 0.0) == 1.0
    for t in (0.25, 0.5, 1.0):
        expected = math.exp(4 * (path.M_at(t) - 1.5 ** 2 * t))
        _close(noise.eval_gbm(path, m, t), expected, 1e-12, f"h_c({t})")
    quiet = noise.build_noise_model([2j], 5.0, -1, 1)
    q_path = noise.sample_path(quiet, 1e-2, 1.0, 3)
    assert np.all(noise.gbm_series(q_path, quiet) == 1.0)


@check("rescaling transform")
def _rescale():
    grid = _grid()
    m = noise.build_noise_model([0.7 + 0.2j], 5.0, -1, 1)
    path = noise.sample_path(m, 1e-2, 1.0, 5)
    f0 = _field(grid)
    assert np.array_equal(noise.rescale(f0, path, m, Direction.TO_RESCALED).values, f0.values)
    f = _field(grid, time=0.5)
    back = noise.rescale(noise.rescale(f, path, m, Direction.TO_RESCALED), path, m, Direction.TO_PHYSICAL)
    assert np.max(np.abs(back.values - f.values)) <= 1e-13 * np.max(np.abs(f.values))
    conservative = noise.build_noise_model([0.9j], 5.0, -1, 1)
    c_path = noise.sample_path(conservative, 1e-2, 1.0, 5)
    u = noise.rescale(f, c_path, conservative, Direction.TO_RESCALED)
    assert np.max(np.abs(np.abs(u.values) - np.abs(f.values))) <= 1e-14


@check("exceedance tends to one as epsilon vanishes")
def _exceedance_small_epsilon():
    est = noise.decay_exceedance_probability(1.0, 1e-30, 5.0, EstimateMethod.CLOSED_FORM)
    assert est.p_hat > 0.999, est.p_hat


# --- solver --------------------------------------------------------------

@check("substeps")
def _substeps():
    grid = _grid()
    f = _field(grid)
    m = noise.build_noise_model([0.4j], 5.0, -1, 1)
    assert np.array_equal(solver.nonlinear_phase_step(f, 2.0, 0.0, m).values, f.values)
    rotated = solver.nonlinear_phase_step(f, 2.0, 0.3, m)
    assert np.max(np.abs(np.abs(rotated.values) - np.abs(f.values))) <= 1e-14
    path = noise.sample_path(m, 1e-2, 1.0, 9)
    assert np.array_equal(solver.noise_multiplier_step(f, path, m, 0.5, 0.5).values, f.values)
    moved = solver.noise_multiplier_step(f, path, m, 0.2, 0.7)
    _close(spectral.lebesgue_norm(moved, 2), spectral.lebesgue_norm(f, 2), 1e-13, "conservative mass")


def _free_run(t_end: float = 1.0):
    grid = _grid()
    m = noise.build_noise_model([], 5.0, 0, 1)
    config = SolverConfig(grid=grid, model=m, dt=1e-2, t_end=t_end, record_stride=10)
    path = noise.sample_path(m, 1e-2, t_end, 0)
    return solver.integrate(config, path, _field(grid)), config


@check("free trajectory")
def _free_trajectory():
    traj, config = _free_run()
    expected = spectral.free_propagate(_field(config.grid), 1.0).values
    assert np.max(np.abs(traj.final_field().values - expected)) <= 1e-10 * np.max(np.abs(expected))
    assert traj.outcome.kind == OutcomeKind.GLOBAL_SCATTERING
    assert solver.scattering_residual(traj, 0.5, 0.5) == 0.0
    assert solver.scattering_residual(traj, 0.0, 1.0) <= 1e-12


@check("non-finite field is a blow-up")
def _non_finite():
    traj, config = _free_run()
    bad = traj.snapshots[3]
    bad.summary = bad.summary.model_copy(update={"mass": float("nan")})
    traj.snapshots = traj.snapshots[:4]
    outcome = solver.classify_outcome(traj, config.thresholds)
    assert outcome.kind == OutcomeKind.BLOWUP and outcome.unstable
    _close(outcome.blowup_time, bad.time, 1e-12, "blow-up time")


# --- picard lab ----------------------------------------------------------

@check("budget slack")
def _budget():
    cases = [
        (Regime.ENERGY_SMALL_TIME, 3, 2.0),
        (Regime.ENERGY_LARGE_TIME, 3, 2.0),
        (Regime.MASS_SMALL_TIME, 1, 2.0),
        (Regime.MASS_LARGE_TIME, 1, 2.0),
    ]
    for regime, d, value in cases:
        solved = picard.solve_budget(regime, value, 1.5, d)
        assert solved.satisfied, regime
        assert picard.solve_budget(regime, value, 1.5, d, parameter=solved.parameter / 2).satisfied, regime


@check("Duhamel map degenerate cases")
def _duhamel():
    grid = _grid()
    m = noise.build_noise_model([], 5.0, -1, 1)
    f = _field(grid, Frame.RESCALED)
    times = picard.uniform_mesh(0.0, 0.5, 11)
    free = picard.free_evolution(f.values, grid, times)
    zero = free.shifted(np.zeros_like(free.values))
    out = picard.duhamel_map(f, zero, 1.0, (0.0, 0.5), m, grid)
    assert np.max(np.abs(out.values - free.values)) <= 1e-12
    out = picard.duhamel_map(f, free, 0.0, (0.0, 0.5), m, grid)
    assert np.max(np.abs(out.values - free.values)) <= 1e-12
    _, report = picard.picard_solve(f, 0.0, (0.0, 0.5), m, grid, n_t=11, n_pairs=0)
    assert report.converged and report.iterations == 1


@check("nonlinearity")
def _nonlinearity():
    grid = _grid()
    zero = spectral.FieldState(grid=grid, values=np.zeros(grid.shape))
    assert np.all(picard.nonlinearity(zero, 5.0).values == 0)
    const = spectral.FieldState(grid=grid, values=np.full(grid.shape, 1.3))
    assert np.allclose(picard.nonlinearity(const, 5.0).values, 1.3 ** 5, rtol=1e-14, atol=0)
    v = _field(grid)
    theta = 0.83
    lhs = picard.nonlinearity(v.evolve(np.exp(1j * theta) * v.values), 5.0).values
    rhs = np.exp(1j * theta) * picard.nonlinearity(v, 5.0).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-14 * max(1.0, np.max(np.abs(rhs)))


@check("pointwise difference ratio")
def _pointwise():
    u = np.array([1 + 2j, -0.5j, 3.0])
    assert np.all(picard._pointwise_ratios(u, u, 5.0) == 0)
    assert np.allclose(picard._pointwise_ratios(u, np.zeros_like(u), 5.0), 1.0, rtol=1e-14, atol=0)


@check("Strichartz ratio is homogeneous")
def _strichartz_homogeneous():
    grid = _grid()
    q, p = spectral.mass_pair(1)
    f = picard.random_localized_field(grid, np.random.default_rng([0, 0]))
    times = picard.uniform_mesh(0.0, 0.5, 11)

    def ratio(g):
        wave = picard.free_evolution(g, grid, times)
        return spectral.mixed_norm(times, list(wave.values), grid, q, p) / spectral.lp_norm(g, grid, 2)

    _close(ratio(2 * f), ratio(f), 1e-13, "f -> 2f")


# --- experiments ---------------------------------------------------------

def _small_sweep(**overrides) -> SweepConfig:
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


@check("noiseless defocusing sweep")
def _sweep_noiseless():
    report = experiments.run_sweep(_small_sweep(), workers=1)
    summary = report.summaries[0]
    assert summary.p_hat == 1.0 and summary.n_global == summary.n_paths
    residuals = {t.scattering_residual for t in report.trajectories}
    assert len(residuals) == 1


@check("martingale audit degenerate cases")
def _martingale():
    conservative = noise.build_noise_model([0.8j], 5.0, -1, 1)
    report = experiments.martingale_audit(conservative, 20, [0.0, 0.5], seed=1, workers=1)
    assert all(cp.max_identity_error <= 1e-13 for cp in report.checkpoints)
    first = report.checkpoints[0]
    assert first.t == 0.0 and first.max_identity_error == 0.0 and first.mean_within_3se and first.correlation_within_3se


@check("frame equivalence degenerate cases")
def _equivalence():
    grid = _grid()
    for phi in ([], [0.6j]):
        m = noise.build_noise_model(phi, 5.0, -1, 1)
        config = SolverConfig(grid=grid, model=m, dt=4e-2, t_end=0.4)
        path = noise.sample_path(m, 1e-2, 0.4, 4)
        table = experiments.equivalence_audit(config, path, [4e-2, 2e-2, 1e-2])
        assert max(r.error for r in table.rows) <= 1e-10, phi


@check("run persistence")
def _persistence():
    sweep = _small_sweep(n_paths=2, snapshot_paths=1, t_end=0.5)
    report = experiments.run_sweep(sweep, workers=1)
    with tempfile.TemporaryDirectory() as tmp:
        run_dir = Path(tmp) / "run"
        experiments.persist_run(report, run_dir)
        loaded = experiments.load_run(run_dir)
        assert loaded.model_dump() == report.model_dump()

        (run_dir / report.snapshot_files[0]).unlink()
        try:
            experiments.load_run(run_dir)
        except CorruptManifestError:
            pass
        else:
            raise AssertionError("missing snapshot not detected")

        manifest = json.loads((run_dir / experiments.MANIFEST).read_text())
        manifest["config_hash"] = "0" * 64
        (run_dir / experiments.MANIFEST).write_text(json.dumps(manifest))
        try:
            experiments.load_run(run_dir)
        except VersionMismatchError:
            pass
        else:
            raise AssertionError("tampered hash not detected")


def run_selftest(names: Optional[List[str]] = None) -> List[SelftestResult]:
    results = []
    for name, fn in CHECKS.items():
        if names and name not in names:
            continue
        try:
            fn()
            results.append(SelftestResult(name=name, passed=True))
        except (AssertionError, SNLSError, ValueError, ArithmeticError) as e:
            logger.debug(f"Selftest {name!r} failed", exc_info=True)
            results.append(SelftestResult(name=name, passed=False, detail=f"{type(e).__name__}: {e}"))
    return results
