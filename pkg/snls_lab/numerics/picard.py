"""
Executable fixed-point constructions for  i u_t + Delta u = lambda h F(u).

The Duhamel map
    Phi(u)(t) = e^{i(t-t0)Delta} u0 - i lambda int_{t0}^t e^{i(t-s)Delta} h(s) F(u(s)) ds
is evaluated in the interaction picture: in Fourier space the integrand
e^{i(s-t0)|xi|^2} FFT(h F(u))(s) is accumulated by the cumulative trapezoid
rule, so one application costs O(n_t) FFTs.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union
import logging
import math

import numpy as np
from scipy import fft as sfft
from scipy.integrate import cumulative_trapezoid

from snls_lab.constants import Criticality, Frame, Regime
from snls_lab.db.schemas.picard import ContractionReport, NonlinearityProbeReport, PicardBudget, TwoStepReport
from snls_lab.db.schemas.solver import SolverConfig
from snls_lab.db.schemas.spectral import GridSpec, StrichartzSpec
from snls_lab.errors import (
    InadmissiblePairError,
    InvalidDimensionError,
    InvalidParameterError,
    MeshMismatchError,
    NonPositiveInputError,
    PicardDivergenceError,
)
from snls_lab.numerics.noise import MESH_TOL, BrownianPath, NoiseModel, criticality_of, gbm_interpolant
from snls_lab.numerics.solver import NO_TRIGGER, integrate
from snls_lab.numerics.spectral import (
    FieldState,
    coordinates,
    dual_pair,
    energy_pair,
    gradient_modulus,
    h1_norm_values,
    is_admissible,
    laplacian_symbol,
    lp_norm,
    make_grid,
    mass_pair,
    mixed_norm,
    spacetime_norm_samples,
)

logger = logging.getLogger(__name__)

# a Brownian path stands for its decay process h_c
HLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray], BrownianPath]

BUDGET_TOL = 1e-12
DIVERGENCE_RUN = 3


# --- budgets -------------------------------------------------------------

def budget_condition(regime: Regime, value: float, C: float, d: int, parameter: float) -> float:
    """Left-hand side of the smallness inequality for the given delta / epsilon."""
    regime = Regime(regime)
    if regime == Regime.ENERGY_SMALL_TIME:
        return 4 * C * value * (2 * parameter) ** (4 / (d - 2))
    if regime == Regime.ENERGY_LARGE_TIME:
        return 4 * C * parameter * (2 * C * value) ** (4 / (d - 2))
    if regime == Regime.MASS_SMALL_TIME:
        return 2 ** (2 + 4 / d) * C * value * parameter ** (4 / d)
    return (2 * C + 1) ** (1 + 4 / d) * 2 * C * parameter * value ** (4 / d)


def solve_budget(
    regime: Regime,
    value: float,
    C_est: float,
    d: int,
    parameter: Optional[float] = None,
    C_source: str = "given",
) -> PicardBudget:
    """
    Largest delta (small-time) or epsilon (large-time) meeting the condition with
    equality; `parameter` evaluates the condition at a chosen value instead.

    `value` is A for the small-time regimes, E for energy large-time and M for
    mass large-time. For mass large-time epsilon bounds ||h||_{L^inf([T, inf))}.
    """
    regime = Regime(regime)
    if not (value > 0 and C_est > 0):
        raise NonPositiveInputError("budget inputs must be positive")
    if regime.is_energy and d < 3:
        raise InvalidDimensionError(f"energy-critical budgets need d >= 3, got {d}", parameter="d")
    if regime == Regime.ENERGY_LARGE_TIME and value <= 1:
        raise NonPositiveInputError(f"E must exceed 1, got {value}", parameter="E")

    if parameter is None:
        if regime == Regime.ENERGY_SMALL_TIME:
            parameter = 0.5 * (1 / (4 * C_est * value)) ** ((d - 2) / 4)
        elif regime == Regime.ENERGY_LARGE_TIME:
            parameter = 1 / (4 * C_est * (2 * C_est * value) ** (4 / (d - 2)))
        elif regime == Regime.MASS_SMALL_TIME:
            parameter = (1 / (2 ** (2 + 4 / d) * C_est * value)) ** (d / 4)
        else:
            parameter = 1 / ((2 * C_est + 1) ** (1 + 4 / d) * 2 * C_est * value ** (4 / d))
    lhs = budget_condition(regime, value, C_est, d, parameter)

    fields = {"A": value} if regime.is_small_time else ({"E": value} if regime.is_energy else {"M": value})
    fields.update({"delta": parameter} if regime.is_small_time else {"epsilon": parameter})
    return PicardBudget(
        regime=regime,
        d=d,
        C_est=C_est,
        C_source=C_source,
        condition_value=lhs,
        satisfied=lhs <= 1 + BUDGET_TOL,
        **fields,
    )


# --- sampled fields ------------------------------------------------------

@dataclass(eq=False)
class SampledField:
    """u(t_j) on a uniform time mesh, values shaped (n_t, *grid.shape)."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray

    @property
    def n_t(self) -> int:
        return len(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.n_t > 1 else 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def field(self, j: int) -> FieldState:
        return FieldState(grid=self.grid, values=self.values[j], frame=Frame.RESCALED, time=float(self.times[j]))

    def sampled_fields(self):
        return self.times, list(self.values)

    def norm(self, q: float, p: float, derivative_order: int = 0) -> float:
        spec = StrichartzSpec(q=q, p=p, derivative_order=derivative_order, t_a=self.times[0], t_b=self.times[-1])
        return spacetime_norm_samples(self.times, list(self.values), self.grid, spec)

    def sup_l2(self) -> float:
        return max(lp_norm(v, self.grid, 2) for v in self.values)

    def minus(self, other: "SampledField") -> "SampledField":
        return SampledField(grid=self.grid, times=self.times, values=self.values - other.values)

    def shifted(self, values: np.ndarray) -> "SampledField":
        return SampledField(grid=self.grid, times=self.times, values=values)


def uniform_mesh(t0: float, t1: float, n_t: int) -> np.ndarray:
    if n_t < 2:
        raise MeshMismatchError(f"need at least two mesh times, got {n_t}", parameter="n_t")
    return np.linspace(t0, t1, n_t)


def _axes(grid: GridSpec) -> Tuple[int, ...]:
    return tuple(range(1, grid.d + 1))


def _time_shape(grid: GridSpec) -> Tuple[int, ...]:
    return (-1,) + (1,) * grid.d


def free_evolution(initial: np.ndarray, grid: GridSpec, times: np.ndarray, t0: Optional[float] = None) -> SampledField:
    t0 = times[0] if t0 is None else t0
    phase = np.exp(-1j * (times - t0).reshape(_time_shape(grid)) * laplacian_symbol(grid))
    values = sfft.ifftn(sfft.fftn(initial) * phase, axes=_axes(grid))
    return SampledField(grid=grid, times=np.asarray(times, dtype=float), values=values)


def _h_values(h: HLike, times: np.ndarray, model: NoiseModel) -> np.ndarray:
    if isinstance(h, BrownianPath):
        if times[-1] > h.horizon * (1 + MESH_TOL):
            raise MeshMismatchError(f"path ends at {h.horizon}, mesh at {times[-1]}", parameter="h")
        return gbm_interpolant(h, model)(times)
    if callable(h):
        return np.asarray(h(times), dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        return np.full(len(times), float(h))
    if h.shape != times.shape:
        raise MeshMismatchError(f"h has {h.size} samples, mesh has {times.size}", parameter="h")
    return h


def _f(values: np.ndarray, alpha: float) -> np.ndarray:
    return np.abs(values) ** (alpha - 1) * values


def nonlinearity(f: FieldState, alpha: float) -> FieldState:
    """F(u) = |u|^{alpha-1} u."""
    return f.evolve(_f(f.values, alpha))


def duhamel_map(
    initial: FieldState,
    u: SampledField,
    h: HLike,
    interval: Tuple[float, float],
    model: NoiseModel,
    grid: Optional[GridSpec] = None,
) -> SampledField:
    """Phi(u) anchored at interval[0]: initial is u0 (small-time) or u(T) (large-time)."""
    grid = grid or u.grid
    t0, t1 = interval
    tol = 1e-9 * max(1.0, abs(t1))
    if u.grid != grid or initial.grid != grid:
        raise MeshMismatchError("iterate, initial data and grid disagree")
    if abs(u.times[0] - t0) > tol or abs(u.times[-1] - t1) > tol:
        raise MeshMismatchError(f"mesh covers {u.interval}, interval is {interval}")
    steps = np.diff(u.times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise MeshMismatchError("time mesh is not uniform")

    axes, shape = _axes(grid), _time_shape(grid)
    ksq = laplacian_symbol(grid)
    s = (u.times - t0).reshape(shape)
    forcing = _h_values(h, u.times, model).reshape(shape) * _f(u.values, model.alpha)
    integrand = sfft.fftn(forcing, axes=axes) * np.exp(1j * s * ksq)
    accumulated = cumulative_trapezoid(integrand, x=u.times, axis=0, initial=0)
    spectrum = np.exp(-1j * s * ksq) * (sfft.fftn(initial.values) - 1j * model.lambda_sign * accumulated)
    return u.shifted(sfft.ifftn(spectrum, axes=axes))


def path_steps(times: np.ndarray, path: BrownianPath) -> Optional[np.ndarray]:
    """Path step index of every mesh time, or None when some time falls between steps."""
    times = np.asarray(times, dtype=float)
    steps = np.rint(times / path.dt).astype(int)
    if np.any(np.abs(steps * path.dt - times) > MESH_TOL * np.maximum(1.0, np.abs(times))) or steps[-1] > path.n_steps:
        return None
    return steps


def integrate_reference(initial: FieldState, path: BrownianPath, times: np.ndarray, model: NoiseModel) -> SampledField:
    """integrate() in the rescaled frame from u(times[0]) = initial, read back on the mesh `times`."""
    steps = path_steps(times, path)
    if steps is None:
        raise MeshMismatchError(f"mesh times are not steps of the path (dt={path.dt:g})", parameter="n_t")
    grid = initial.grid
    config = SolverConfig(
        grid=grid,
        model=model,
        dt=path.dt,
        t_end=float(steps[-1] * path.dt),
        frame=Frame.RESCALED,
        record_stride=int(np.gcd.reduce(steps)) or 1,
        thresholds=NO_TRIGGER,
        snapshot_fields=True,
    )
    start = initial.evolve(initial.values, frame=Frame.RESCALED, time=float(steps[0] * path.dt))
    traj = integrate(config, path, start)
    values = np.stack([traj.field_at(k * path.dt).values for k in steps])
    return SampledField(grid=grid, times=np.asarray(times, dtype=float), values=values)


def metric_pair(model: NoiseModel) -> Tuple[float, float]:
    return energy_pair(model.d) if model.criticality == Criticality.ENERGY else mass_pair(model.d)


def random_localized_field(grid: GridSpec, rng: np.random.Generator, n_modes: int = 4, width: float = 1.0, k_spread: float = 2.0) -> np.ndarray:
    """
    Gaussian envelope times a few random plane waves, L^2-normalized.

    The draws do not depend on the grid, so refining n samples the same function.
    """
    k = rng.uniform(-k_spread, k_spread, size=(n_modes, grid.d))
    a = rng.standard_normal(n_modes) + 1j * rng.standard_normal(n_modes)
    x = coordinates(grid)
    envelope = np.exp(-sum(xi ** 2 for xi in x) / (2 * width ** 2))
    waves = sum(a[m] * np.exp(1j * sum(k[m, i] * x[i] for i in range(grid.d))) for m in range(n_modes))
    f = envelope * waves
    return f / lp_norm(f, grid, 2)


def relative_sup_l2(u: SampledField, reference: SampledField) -> float:
    diff = max(lp_norm(a - b, u.grid, 2) for a, b in zip(u.values, reference.values))
    return diff / max(reference.sup_l2(), 1e-300)


def picard_solve(
    initial: FieldState,
    h: HLike,
    interval: Tuple[float, float],
    model: NoiseModel,
    grid: Optional[GridSpec] = None,
    n_t: int = 101,
    max_iter: int = 50,
    tol: float = 1e-10,
    budget: Optional[PicardBudget] = None,
    n_pairs: int = 20,
    seed: int = 0,
    compare_integrate: bool = False,
) -> Tuple[SampledField, ContractionReport]:
    """
    Iterate Phi from the free evolution until successive S(I) distances fall below
    `tol`. With `compare_integrate` (h must then be a BrownianPath) the fixed point
    is checked against integrate() in the rescaled frame on the same path.
    """
    grid = grid or initial.grid
    if compare_integrate and not isinstance(h, BrownianPath):
        raise InvalidParameterError("the integrate() comparison needs h as a Brownian path", parameter="h")
    if budget is not None and not budget.satisfied:
        logger.warning(f"⚠️ Budget for {budget.regime.value} not satisfied (condition {budget.condition_value:.4g} > 1); iterating anyway")

    times = uniform_mesh(interval[0], interval[1], n_t)
    q, p = metric_pair(model)
    ball_order = 1 if model.criticality == Criticality.ENERGY else 0
    u = free_evolution(initial.values, grid, times)
    max_norm = u.norm(q, p, ball_order)
    distances: List[float] = []
    rising = 0
    converged = False
    for it in range(max_iter):
        u_next = duhamel_map(initial, u, h, interval, model, grid)
        if not np.all(np.isfinite(u_next.values)):
            raise PicardDivergenceError(f"non-finite iterate at iteration {it + 1}", distances)
        distance = u_next.minus(u).norm(q, p)
        distances.append(distance)
        max_norm = max(max_norm, u_next.norm(q, p, ball_order))
        u = u_next
        if distance < tol:
            converged = True
            break
        rising = rising + 1 if len(distances) > 1 and distance > distances[-2] else 0
        if rising >= DIVERGENCE_RUN:
            raise PicardDivergenceError(f"iterate distances grew {DIVERGENCE_RUN} times in a row", distances)
    logger.debug(f"Picard on {interval}: {len(distances)} iterations, last distance {distances[-1] if distances else float('nan'):.3e}")

    ratios, seeds = [], []
    if n_pairs:
        base = u.norm(q, p) or 1e-3
        for i in range(n_pairs):
            rng = np.random.default_rng([seed, i])
            waves = [free_evolution(random_localized_field(grid, rng), grid, times) for _ in range(2)]
            scale = 0.1 * base / max(w.norm(q, p) for w in waves)
            ua = u.shifted(u.values + scale * waves[0].values)
            ub = u.shifted(u.values + scale * waves[1].values)
            num = duhamel_map(initial, ua, h, interval, model, grid).minus(duhamel_map(initial, ub, h, interval, model, grid)).norm(q, p)
            den = ua.minus(ub).norm(q, p)
            ratios.append(num / den if den > 0 else 0.0)
            seeds.append([seed, i])

    radius = budget.ball_radius if budget is not None else None
    report = ContractionReport(
        iterate_distances=distances,
        iterations=len(distances),
        converged=converged,
        empirical_lipschitz=max(ratios) if ratios else None,
        lipschitz_ratios=ratios,
        lipschitz_seeds=seeds,
        ball_radius=radius,
        max_iterate_norm=max_norm,
        in_ball=None if radius is None else max_norm <= radius,
        budget_satisfied=None if budget is None else budget.satisfied,
        metric=f"L^{q:g}_t L^{p:g}_x",
    )
    if compare_integrate:
        report.residual = relative_sup_l2(u, integrate_reference(initial, h, times, model))
    return u, report


# --- probes --------------------------------------------------------------

def _pointwise_ratios(u: np.ndarray, v: np.ndarray, alpha: float) -> np.ndarray:
    num = np.abs(_f(u, alpha) - _f(v, alpha))
    den = (np.abs(u) ** (alpha - 1) + np.abs(v) ** (alpha - 1)) * np.abs(u - v)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, 0.0)


def dense_pointwise_scan(alpha: float, n_grid: int = 400) -> float:
    """
    Max of |F(u)-F(v)| / ((|u|^{alpha-1} + |v|^{alpha-1}) |u-v|) over u = 1,
    v = r e^{i theta}, r in [0, 1], theta in [0, pi]; homogeneity and symmetry
    make this the global supremum.
    """
    r, theta = np.meshgrid(np.linspace(0, 1, n_grid), np.linspace(0, np.pi, n_grid), indexing="ij")
    v = r * np.exp(1j * theta)
    return float(np.max(_pointwise_ratios(np.ones_like(v), v, alpha)))


def _default_probe_grid(d: int) -> GridSpec:
    return {1: make_grid(1, 256, 40.0), 2: make_grid(2, 64, 20.0), 3: make_grid(3, 32, 16.0)}[d]


def _norm_ratios(grid: GridSpec, alpha: float, criticality: Criticality, seed: int, n_fields: int, horizon: float, n_t: int) -> dict:
    d = grid.d
    q, p = energy_pair(d) if criticality == Criticality.ENERGY else mass_pair(d)
    qd, pd = dual_pair(q, p)
    e = alpha - 1
    times = uniform_mesh(0.0, horizon, n_t)

    def S(fields):
        return mixed_norm(times, fields, grid, q, p)

    def N(fields):
        return mixed_norm(times, fields, grid, qd, pd)

    best = {"F": 0.0, "difference": 0.0, "gradient": 0.0}
    for i in range(n_fields):
        rng = np.random.default_rng([seed, 100 + i])
        u = free_evolution(random_localized_field(grid, rng), grid, times).values
        v = free_evolution(random_localized_field(grid, rng), grid, times).values
        grad_u = [gradient_modulus(x, grid) for x in u]
        grad_v = [gradient_modulus(x, grid) for x in v]
        Fu, Fv = _f(u, alpha), _f(v, alpha)
        grad_Fu = [gradient_modulus(x, grid) for x in Fu]
        if criticality == Criticality.ENERGY:
            ratios = {
                "F": N(Fu) / (S(u) * S(grad_u) ** e),
                "difference": N(Fu - Fv) / ((S(grad_u) ** e + S(grad_v) ** e) * S(u - v)),
                "gradient": N(grad_Fu) / S(grad_u) ** (1 + e),
            }
        else:
            ratios = {
                "F": N(Fu) / S(u) ** (1 + e),
                "difference": N(Fu - Fv) / ((S(u) ** e + S(v) ** e) * S(u - v)),
                "gradient": N(grad_Fu) / (S(u) ** e * S(grad_u)),
            }
        for key, value in ratios.items():
            best[key] = max(best[key], float(value))
    return best


def probe_nonlinearity_estimates(
    d: int,
    alpha: float,
    n_samples: int,
    seed: int,
    grid: Optional[GridSpec] = None,
    n_fields: int = 6,
    horizon: float = 0.5,
    n_t: int = 11,
) -> NonlinearityProbeReport:
    """Empirical constants of the pointwise difference bound and of the three norm estimates."""
    if n_samples < 100:
        raise NonPositiveInputError(f"n_samples must be at least 100, got {n_samples}", parameter="n_samples")
    criticality = criticality_of(alpha, d)
    rng = np.random.default_rng([seed, 0])
    size = 2 * n_samples
    modulus = 10 ** rng.uniform(-2, 2, size)
    ratio = rng.random(size)
    phase, shift = rng.uniform(0, 2 * np.pi, (2, size))
    u = modulus * np.exp(1j * phase)
    v = modulus * ratio * np.exp(1j * (phase + shift))
    swap = rng.random(size) < 0.5
    u, v = np.where(swap, v, u), np.where(swap, u, v)
    values = _pointwise_ratios(u, v, alpha)
    first, doubled = float(values[:n_samples].max()), float(values.max())

    grid = grid or _default_probe_grid(d)
    refined = make_grid(d, 2 * grid.n, grid.L)
    coarse = _norm_ratios(grid, alpha, criticality, seed, n_fields, horizon, n_t)
    fine = _norm_ratios(refined, alpha, criticality, seed, n_fields, horizon, n_t)
    norm_stable = all(abs(fine[k] - coarse[k]) <= 0.1 * coarse[k] for k in coarse)

    return NonlinearityProbeReport(
        d=d,
        alpha=alpha,
        n_samples=n_samples,
        seed=seed,
        pointwise_max=first,
        pointwise_max_doubled=doubled,
        pointwise_stable=doubled - first <= 0.1 * first,
        scan_max=dense_pointwise_scan(alpha),
        norm_ratios=coarse,
        norm_ratios_refined=fine,
        norm_stable=norm_stable,
    )


def _strichartz_nodes(horizon: float, sample_dt: float) -> np.ndarray:
    nodes = sample_dt * np.arange(int(math.floor(horizon / sample_dt + 1e-9)) + 1)
    if horizon - nodes[-1] > 1e-9 * max(1.0, horizon):
        nodes = np.append(nodes, horizon)
    return nodes


def estimate_strichartz_constant(
    d: int,
    q: float,
    p: float,
    grid: GridSpec,
    n_samples: int,
    horizon: float,
    seed: int,
    sample_dt: float = 0.01,
) -> float:
    """sup over random L^2-normalized localized fields of ||e^{it Delta} f||_{L^q L^p([0, horizon])} / ||f||_2."""
    if not is_admissible(q, p, d):
        raise InadmissiblePairError(f"(q, p) = ({q}, {p}) is not admissible in d={d}", parameter="q")
    if grid.d != d:
        raise MeshMismatchError(f"grid dimension {grid.d} differs from d={d}")
    times = _strichartz_nodes(horizon, sample_dt)
    best = 0.0
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        f = random_localized_field(grid, rng)
        wave = free_evolution(f, grid, times)
        best = max(best, mixed_norm(times, list(wave.values), grid, q, p) / lp_norm(f, grid, 2))
    logger.debug(f"Strichartz estimate d={d} (q,p)=({q:g},{p:g}) horizon={horizon}: {best:.4g}")
    return best


def linear_profile_smallness(initial: FieldState, c_norm: float, model: NoiseModel, n_t: int = 101) -> float:
    """||e^{it Delta} X0|| over [0, 1/||c||]: S^1 for energy-critical, S for mass-critical."""
    if not c_norm > 0:
        raise NonPositiveInputError(f"c_norm must be positive, got {c_norm}", parameter="c_norm")
    q, p = metric_pair(model)
    order = 1 if model.criticality == Criticality.ENERGY else 0
    return free_evolution(initial.values, initial.grid, uniform_mesh(0.0, 1.0 / c_norm, n_t)).norm(q, p, order)


def two_step_solve(
    initial: FieldState,
    h: HLike,
    T: float,
    t_end: float,
    model: NoiseModel,
    n_t_small: int = 51,
    n_t_large: int = 101,
    max_iter: int = 50,
    tol: float = 1e-10,
    n_pairs: int = 0,
    seed: int = 0,
    compare_integrate: bool = False,
) -> Tuple[SampledField, TwoStepReport]:
    """Fixed point on [0, T], then on [T, t_end] seeded with u(T); glued on the union mesh."""
    if not 0 < T < t_end:
        raise NonPositiveInputError(f"need 0 < T < t_end, got T={T}, t_end={t_end}", parameter="T")
    if compare_integrate and not isinstance(h, BrownianPath):
        raise InvalidParameterError("the integrate() comparison needs h as a Brownian path", parameter="h")
    grid = initial.grid
    small, small_report = picard_solve(initial, h, (0.0, T), model, grid, n_t_small, max_iter, tol, n_pairs=n_pairs, seed=seed)
    seed_field = small.field(small.n_t - 1)
    large, large_report = picard_solve(seed_field, h, (T, t_end), model, grid, n_t_large, max_iter, tol, n_pairs=n_pairs, seed=seed + 1)
    glued = SampledField(
        grid=grid,
        times=np.concatenate([small.times, large.times[1:]]),
        values=np.concatenate([small.values, large.values[1:]], axis=0),
    )

    energy = model.criticality == Criticality.ENERGY
    norm_of = (lambda v: h1_norm_values(v, grid)) if energy else (lambda v: lp_norm(v, grid, 2))
    initial_norm = norm_of(initial.values)
    max_norm = max(norm_of(v) for v in glued.values)

    glue_residual = None
    if compare_integrate:
        glue_residual = relative_sup_l2(glued, integrate_reference(initial, h, glued.times, model))

    report = TwoStepReport(
        T=T,
        t_end=t_end,
        small_time=small_report,
        large_time=large_report,
        initial_norm=initial_norm,
        max_norm=max_norm,
        growth_bound_holds=max_norm <= initial_norm + 1,
        glue_residual=glue_residual,
        norm_kind="H1" if energy else "L2",
    )
    return glued, report
