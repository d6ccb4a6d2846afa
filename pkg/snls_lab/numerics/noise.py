"""
Noise engine: coefficients, Brownian paths, the geometric Brownian motion h_c,
the rescaling transform and the exceedance probabilities of h_c.

Under the time change tau = ||c||^2 t the martingale M(t) = sum c_k beta_k(t)
becomes a standard Brownian motion B, and

    sup_{t >= 1/||c||} h_c(t) > eps   <=>   sup_{tau >= ||c||} (B(tau) - tau) > ln(eps)/(alpha - 1),

so every exceedance question reduces to the running maximum of a unit-drift
Brownian motion started at tau = ||c||.
"""
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import logging
import math
import re

import numpy as np
from scipy.stats import norm

from snls_lab.constants import Criticality, Direction, EstimateMethod, Frame
from snls_lab.db.schemas.noise import ProbabilityEstimate
from snls_lab.dependencies import get_workers
from snls_lab.errors import (
    CliValidationError,
    ExponentDimensionMismatchError,
    FrameMismatchError,
    InvalidDimensionError,
    InvalidParameterError,
    NonPositiveInputError,
    OffMeshError,
)
from snls_lab.numerics.spectral import FieldState

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]

MESH_TOL = 1e-9
TAIL_TARGET = 1e-4
KILL_DEPTH = 10.0       # paths this far below every level are dropped; return probability e^{-20}
BATCH_SIZE = 256
CHUNK_STEPS = 512


@dataclass(frozen=True)
class NoiseModel:
    phi: Tuple[complex, ...]
    alpha: float
    lambda_sign: int
    d: int

    @property
    def n_modes(self) -> int:
        return len(self.phi)

    @property
    def phi_array(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=np.complex128)

    @property
    def c(self) -> np.ndarray:
        return self.phi_array.real

    @property
    def mu(self) -> float:
        return 0.5 * float(np.sum(np.abs(self.phi_array) ** 2))

    @property
    def mu_hat(self) -> complex:
        phi = self.phi_array
        return complex(0.5 * np.sum(np.abs(phi) ** 2 + phi ** 2))

    @property
    def c_norm(self) -> float:
        return float(np.sqrt(np.sum(self.c ** 2)))

    @property
    def criticality(self) -> Criticality:
        return criticality_of(self.alpha, self.d)

    @property
    def is_conservative(self) -> bool:
        return self.c_norm == 0.0

    def to_dict(self) -> dict:
        return {
            "phi": [format_complex(z) for z in self.phi],
            "alpha": self.alpha,
            "lambda_sign": self.lambda_sign,
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        return build_noise_model(
            [parse_complex(z) for z in data["phi"]], data["alpha"], data["lambda_sign"], data["d"]
        )


def mass_critical_alpha(d: int) -> float:
    return 1 + 4 / d


def energy_critical_alpha(d: int) -> float:
    return 1 + 4 / (d - 2)


def criticality_of(alpha: float, d: int) -> Criticality:
    if abs(alpha - mass_critical_alpha(d)) <= 1e-12:
        return Criticality.MASS
    if d >= 3 and abs(alpha - energy_critical_alpha(d)) <= 1e-12:
        return Criticality.ENERGY
    raise ExponentDimensionMismatchError(
        f"alpha={alpha} is neither mass- nor energy-critical in d={d}", parameter="alpha"
    )


def build_noise_model(phi_list: Iterable[complex], alpha: float, lambda_sign: int, d: int) -> NoiseModel:
    if d not in (1, 2, 3):
        raise InvalidDimensionError(f"d must be 1, 2 or 3, got {d}", parameter="d")
    criticality_of(alpha, d)
    if lambda_sign not in (-1, 0, 1):
        raise InvalidParameterError(
            f"lambda_sign must be -1, 0 or 1, got {lambda_sign}", parameter="lambda_sign"
        )
    phi = tuple(complex(z) for z in phi_list)
    if not all(math.isfinite(z.real) and math.isfinite(z.imag) for z in phi):
        raise InvalidParameterError("noise coefficients must be finite", parameter="phi")
    return NoiseModel(phi=phi, alpha=float(alpha), lambda_sign=int(lambda_sign), d=d)


_BARE_UNIT = re.compile(r"(^|[+-])j")


def parse_complex(text: Union[str, complex, float]) -> complex:
    """Parse "a+bi" style literals ("i", "-2.5i", "1-i", "3")."""
    if not isinstance(text, str):
        return complex(text)
    s = text.strip().replace(" ", "").replace("I", "i").replace("i", "j")
    s = _BARE_UNIT.sub(r"\g<1>1j", s)
    try:
        return complex(s)
    except ValueError as e:
        raise CliValidationError(f"cannot parse complex literal {text!r}", parameter="phi") from e


def parse_phi_list(text: str) -> List[complex]:
    if text is None or not text.strip():
        return []
    return [parse_complex(item) for item in text.split(",")]


def format_complex(z: complex) -> str:
    return f"{z.real!r}{'+' if z.imag >= 0 else '-'}{abs(z.imag)!r}i"


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Per-mode increments on the mesh t_j = j dt, j = 0..n_steps."""

    dt: float
    increments: np.ndarray
    phi: Tuple[complex, ...]
    seed: Tuple[int, ...] = ()
    M: np.ndarray = field(init=False, repr=False, compare=False)
    W: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float).reshape(-1, len(self.phi))
        inc.setflags(write=False)
        beta = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
        phi = np.asarray(self.phi, dtype=np.complex128)
        M = beta @ phi.real if phi.size else np.zeros(beta.shape[0])
        W = beta @ phi if phi.size else np.zeros(beta.shape[0], dtype=np.complex128)
        for arr in (M, W):
            arr.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "W", W)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def beta(self) -> np.ndarray:
        return np.vstack([np.zeros((1, self.increments.shape[1])), np.cumsum(self.increments, axis=0)])

    def index_of(self, t: float) -> int:
        j = int(round(t / self.dt))
        if abs(t - j * self.dt) > MESH_TOL * max(1.0, abs(t)) or not 0 <= j <= self.n_steps:
            raise OffMeshError(f"t={t} is not on the path mesh (dt={self.dt}, horizon={self.horizon})", parameter="t")
        return j

    def M_at(self, t: float) -> float:
        return float(self.M[self.index_of(t)])

    def W_at(self, t: float) -> complex:
        return complex(self.W[self.index_of(t)])

    def coarsen(self, factor: int) -> "BrownianPath":
        """The same realization observed on the mesh with step factor * dt."""
        if factor < 1 or self.n_steps % factor:
            raise OffMeshError(f"cannot coarsen {self.n_steps} steps by {factor}", parameter="factor")
        inc = self.increments.reshape(self.n_steps // factor, factor, -1).sum(axis=1)
        return BrownianPath(dt=self.dt * factor, increments=inc, phi=self.phi, seed=self.seed)


def _seed_tuple(seed: SeedLike) -> Tuple[int, ...]:
    return (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)


def sample_path(model: NoiseModel, dt: float, horizon: float, seed: SeedLike) -> BrownianPath:
    if not dt > 0:
        raise NonPositiveInputError(f"dt must be positive, got {dt}", parameter="dt")
    if horizon < dt:
        raise NonPositiveInputError(f"horizon {horizon} is shorter than dt {dt}", parameter="horizon")
    n_steps = int(math.ceil(horizon / dt - MESH_TOL))
    seed = _seed_tuple(seed)
    rng = np.random.default_rng(list(seed))
    increments = math.sqrt(dt) * rng.standard_normal((n_steps, model.n_modes))
    return BrownianPath(dt=dt, increments=increments, phi=model.phi, seed=seed)


def gbm_series(path: BrownianPath, model: NoiseModel) -> np.ndarray:
    """h_c on every mesh time."""
    c_sq = model.c_norm ** 2
    return np.exp((model.alpha - 1) * (path.M - c_sq * path.times))


def eval_gbm(path: BrownianPath, model: NoiseModel, t: float) -> float:
    j = path.index_of(t)
    t_j = j * path.dt
    return float(np.exp((model.alpha - 1) * (path.M[j] - model.c_norm ** 2 * t_j)))


def gbm_interpolant(path: BrownianPath, model: NoiseModel):
    """t -> h_c(t) with the exponent interpolated linearly between mesh times."""
    times, M = path.times, path.M
    c_sq = model.c_norm ** 2

    def h(t):
        return np.exp((model.alpha - 1) * (np.interp(t, times, M) - c_sq * np.asarray(t)))

    return h


def rescale_factor(path: BrownianPath, model: NoiseModel, t: float) -> complex:
    """e^{mu_hat t - W(t)}, taking X to u."""
    j = path.index_of(t)
    return complex(np.exp(model.mu_hat * j * path.dt - path.W[j]))


def rescale(f: FieldState, path: BrownianPath, model: NoiseModel, direction: Direction) -> FieldState:
    direction = Direction(direction)
    source, target = (
        (Frame.PHYSICAL, Frame.RESCALED) if direction == Direction.TO_RESCALED else (Frame.RESCALED, Frame.PHYSICAL)
    )
    if f.frame != source:
        raise FrameMismatchError(f"{direction.value} expects a {source.value} field, got {f.frame.value}")
    j = path.index_of(f.time)
    exponent = model.mu_hat * j * path.dt - path.W[j]
    if direction == Direction.TO_PHYSICAL:
        exponent = -exponent
    return f.evolve(f.values * np.exp(exponent), frame=target)


def wilson_interval(successes: int, n: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p_hat = successes / n
    denominator = 1 + z ** 2 / n
    center = (p_hat + z ** 2 / (2 * n)) / denominator
    spread = z * math.sqrt((p_hat * (1 - p_hat) + z ** 2 / (4 * n)) / n) / denominator
    lower = min(max(0.0, center - spread), p_hat)
    upper = max(min(1.0, center + spread), p_hat)
    return (lower, upper)


def binomial_estimate(successes: int, n: int, seed: Optional[int] = None, tail_bound: Optional[float] = None) -> ProbabilityEstimate:
    lo, hi = wilson_interval(successes, n)
    return ProbabilityEstimate(
        p_hat=successes / n if n else 0.0,
        n_samples=n,
        ci_lo=lo,
        ci_hi=hi,
        method=EstimateMethod.MONTE_CARLO,
        tail_bound=tail_bound,
        seed=seed,
    )


def exceedance_closed_form(s: float, a: float) -> float:
    """
    P(sup_{t >= s} (B(t) - t) > a) for standard Brownian motion B.

    B(s) - s ~ N(-s, s); from a level x < a the drifted motion ever reaches a
    with probability e^{-2(a - x)}. Integrating over x gives
    Phi_bar((a + s)/sqrt(s)) + e^{-2a} Phi((a - s)/sqrt(s)).
    """
    if s <= 0:
        # sup_{t >= 0}(B - t) is exponential with rate 2
        return float(min(1.0, math.exp(-2 * a))) if a > 0 else 1.0
    root = math.sqrt(s)
    first = norm.sf((a + s) / root)
    second = math.exp(-2 * a + norm.logcdf((a - s) / root))
    return float(min(1.0, first + second))


def reduced_level(epsilon: float, alpha: float) -> float:
    return math.log(epsilon) / (alpha - 1)


def truncation_horizon(s: float, levels: Sequence[float], target: float = TAIL_TARGET) -> Tuple[float, float]:
    """Default 20 + 10/s, doubled until the mass beyond it is below target."""
    T = 20.0 + 10.0 / s if s > 0 else 30.0
    bound = max(exceedance_closed_form(s + T, a) for a in levels)
    while bound >= target:
        T *= 2
        bound = max(exceedance_closed_form(s + T, a) for a in levels)
    return T, bound


def _crossing_batch(task: tuple) -> Tuple[int, int]:
    """
    Simulate drift -1 Brownian motion from tau0 to tau0 + horizon and count
    paths exceeding any level (t_from, a) for tau >= t_from. Crossings between
    mesh points are sampled from the Brownian-bridge law.
    """
    tau0, levels, horizon, dt, n, seed, batch_index = task
    rng = np.random.default_rng([seed, batch_index])
    root_dt = math.sqrt(dt)
    x = -tau0 + math.sqrt(tau0) * rng.standard_normal(n) if tau0 > 0 else np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    for t_from, a in levels:
        if t_from <= tau0 + MESH_TOL:
            hit |= x > a
    floor = min(a for _, a in levels) - KILL_DEPTH
    active = ~hit
    dropped = 0
    n_steps = int(math.ceil(horizon / dt - MESH_TOL))
    step = 0
    while step < n_steps and active.any():
        m = min(CHUNK_STEPS, n_steps - step)
        idx = np.flatnonzero(active)
        inc = -dt + root_dt * rng.standard_normal((idx.size, m))
        path = x[idx, None] + np.cumsum(inc, axis=1)
        prev = np.concatenate([x[idx, None], path[:, :-1]], axis=1)
        tau_prev = tau0 + dt * (step + np.arange(m))
        crossed = np.zeros(idx.size, dtype=bool)
        log_survive = np.zeros(idx.size)
        for t_from, a in levels:
            on = tau_prev >= t_from - MESH_TOL
            if not on.any():
                continue
            crossed |= (path[:, on] > a).any(axis=1)
            gap = np.clip((a - prev[:, on]) * (a - path[:, on]), 0.0, None)
            with np.errstate(divide="ignore"):
                log_survive += np.log1p(-np.exp(-2.0 * gap / dt)).sum(axis=1)
        crossed |= rng.random(idx.size) < -np.expm1(log_survive)
        hit[idx[crossed]] = True
        x[idx] = path[:, -1]
        active[idx[crossed]] = False
        deep = active & (x < floor)
        dropped += int(deep.sum())
        active &= ~deep
        step += m
    return int(hit.sum()), dropped


def _run_batches(tau0, levels, horizon, dt, n_samples, seed, workers) -> Tuple[int, int]:
    sizes = [BATCH_SIZE] * (n_samples // BATCH_SIZE)
    if n_samples % BATCH_SIZE:
        sizes.append(n_samples % BATCH_SIZE)
    tasks = [(tau0, tuple(levels), horizon, dt, size, seed, i) for i, size in enumerate(sizes)]
    workers = min(get_workers(workers), len(tasks)) or 1
    if workers > 1:
        with Pool(workers) as pool:
            results = pool.map(_crossing_batch, tasks)
    else:
        results = list(map(_crossing_batch, tasks))
    return sum(r[0] for r in results), sum(r[1] for r in results)


def decay_exceedance_probability(
    c_norm: float,
    epsilon: float,
    alpha: float,
    method: EstimateMethod = EstimateMethod.CLOSED_FORM,
    n_samples: int = 100_000,
    seed: int = 0,
    dt: float = 1e-3,
    workers: Optional[int] = None,
) -> ProbabilityEstimate:
    """P(sup_{t >= 1/||c||} h_c(t) > epsilon)."""
    if not c_norm > 0:
        raise NonPositiveInputError(f"c_norm must be positive, got {c_norm}", parameter="c_norm")
    if not epsilon > 0:
        raise NonPositiveInputError(f"epsilon must be positive, got {epsilon}", parameter="epsilon")
    if not alpha > 1:
        raise NonPositiveInputError(f"alpha - 1 must be positive, got {alpha}", parameter="alpha")
    s, a = c_norm, reduced_level(epsilon, alpha)
    method = EstimateMethod(method)
    if method == EstimateMethod.CLOSED_FORM:
        p = exceedance_closed_form(s, a)
        return ProbabilityEstimate(p_hat=p, n_samples=0, ci_lo=p, ci_hi=p, method=method)

    if n_samples < 1:
        raise NonPositiveInputError("n_samples must be at least 1", parameter="n_samples")
    T, bound = truncation_horizon(s, [a])
    exceeded, dropped = _run_batches(s, [(s, a)], T, dt, n_samples, seed, workers)
    tail = bound + dropped / n_samples * math.exp(-2 * KILL_DEPTH)
    logger.info(
        f"Exceedance MC: s={s:g} a={a:.4g} T={T:g} dt={dt:g} -> {exceeded}/{n_samples} (tail bound {tail:.2e})"
    )
    return binomial_estimate(exceeded, n_samples, seed=seed, tail_bound=tail)


def sup_bound_quantile(alpha: float, eta: float) -> float:
    """
    A with P(sup_{t >= 0} h_c(t) <= A) = 1 - eta/2, for every ||c|| > 0.

    sup_{tau >= 0}(B - tau) is exponential with rate 2.
    """
    if not 0 < eta < 2:
        raise InvalidParameterError(f"eta must lie in (0, 2), got {eta}", parameter="eta")
    return float((2.0 / eta) ** ((alpha - 1) / 2))


def omega_c_probability(
    c_norm: float,
    alpha: float,
    A: float,
    epsilon: float,
    n_samples: int = 10_000,
    seed: int = 0,
    dt: float = 1e-3,
    workers: Optional[int] = None,
) -> ProbabilityEstimate:
    """Monte Carlo probability of {sup_{t>=0} h_c <= A and sup_{t>=1/||c||} h_c <= epsilon}."""
    if not (c_norm > 0 and A > 0 and epsilon > 0):
        raise NonPositiveInputError("c_norm, A and epsilon must be positive")
    s = c_norm
    levels = [(0.0, reduced_level(A, alpha)), (s, reduced_level(epsilon, alpha))]
    T, bound = truncation_horizon(s, [a for _, a in levels])
    exceeded, dropped = _run_batches(0.0, levels, s + T, dt, n_samples, seed, workers)
    tail = bound + dropped / n_samples * math.exp(-2 * KILL_DEPTH)
    return binomial_estimate(n_samples - exceeded, n_samples, seed=seed, tail_bound=tail)


def sup_gbm_samples(
    c_norm: float,
    alpha: float,
    n_samples: int,
    seed: int,
    method: str = "reduced",
    dt: float = 1e-2,
    phi: Optional[Sequence[complex]] = None,
) -> np.ndarray:
    """
    Samples of the discretely monitored sup_{t >= 1/||c||} h_c(t).

    `direct` simulates the modes beta_k in physical time with step dt/||c||^2;
    `reduced` simulates B(tau) - tau with step dt from tau = ||c||. Both
    observe the same time-changed mesh, so their laws coincide exactly.
    """
    if not c_norm > 0:
        raise NonPositiveInputError(f"c_norm must be positive, got {c_norm}", parameter="c_norm")
    s = c_norm
    T = 20.0 + 10.0 / s
    n_steps = int(math.ceil(T / dt))
    rng = np.random.default_rng([seed, 0 if method == "reduced" else 1])
    if method == "reduced":
        x = -s + math.sqrt(s) * rng.standard_normal(n_samples)
        best = x.copy()
        for start in range(0, n_steps, CHUNK_STEPS):
            m = min(CHUNK_STEPS, n_steps - start)
            walk = x[:, None] + np.cumsum(-dt + math.sqrt(dt) * rng.standard_normal((n_samples, m)), axis=1)
            best = np.maximum(best, walk.max(axis=1))
            x = walk[:, -1]
        return np.exp((alpha - 1) * best)
    if method != "direct":
        raise InvalidParameterError(f"unknown method {method!r}", parameter="method")

    c = np.asarray([z.real for z in phi], dtype=float) if phi is not None else np.array([c_norm])
    if abs(np.linalg.norm(c) - c_norm) > 1e-12 * max(1.0, c_norm):
        raise InvalidParameterError("phi does not match c_norm", parameter="phi")
    dt_phys = dt / c_norm ** 2
    t0 = 1.0 / c_norm
    beta = math.sqrt(t0) * rng.standard_normal((n_samples, c.size))
    log_h = (beta @ c) - c_norm ** 2 * t0
    best = log_h.copy()
    for start in range(0, n_steps, CHUNK_STEPS):
        m = min(CHUNK_STEPS, n_steps - start)
        d_beta = math.sqrt(dt_phys) * rng.standard_normal((n_samples, m, c.size))
        walk = log_h[:, None] + np.cumsum(d_beta @ c - c_norm ** 2 * dt_phys, axis=1)
        best = np.maximum(best, walk.max(axis=1))
        log_h = walk[:, -1]
    return np.exp((alpha - 1) * best)


def iterated_log_statistic(n_samples: int, horizon: float, seed: int, dt: float = 1.0, t_min: float = 16.0) -> dict:
    """max_{t_min <= t <= horizon} B(t) / sqrt(2 t ln ln t) per sample; informational only."""
    rng = np.random.default_rng(seed)
    n_steps = int(math.ceil(horizon / dt))
    times = dt * np.arange(1, n_steps + 1)
    window = times >= t_min
    scale = np.sqrt(2 * times[window] * np.log(np.log(times[window])))
    stats = np.empty(n_samples)
    for i in range(n_samples):
        B = np.cumsum(math.sqrt(dt) * rng.standard_normal(n_steps))
        stats[i] = np.max(B[window] / scale)
    return {
        "n_samples": n_samples,
        "horizon": horizon,
        "mean": float(stats.mean()),
        "max": float(stats.max()),
        "quantiles": {q: float(np.quantile(stats, q)) for q in (0.1, 0.5, 0.9)},
    }
