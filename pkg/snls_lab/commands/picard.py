from pathlib import Path
import argparse
import json
import logging

import numpy as np

from snls_lab.commands.common import output_stream, validate_params
from snls_lab.constants import Frame, Regime
from snls_lab.db.schemas.cli import PicardParams
from snls_lab.numerics.noise import (
    build_noise_model,
    energy_critical_alpha,
    gbm_interpolant,
    mass_critical_alpha,
    sample_path,
)
from snls_lab.numerics.picard import (
    estimate_strichartz_constant,
    linear_profile_smallness,
    metric_pair,
    path_steps,
    picard_solve,
    solve_budget,
    uniform_mesh,
)
from snls_lab.numerics.profiles import gaussian
from snls_lab.numerics.spectral import FieldState, h1_norm_values, lp_norm, make_grid

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser(
        "picard",
        help="Fixed-point construction on one interval with its smallness budget (JSON report)",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--regime", choices=[r.value for r in Regime], default=Regime.MASS_SMALL_TIME.value)
    parser.add_argument("--d", type=int, default=1, help="spatial dimension (energy regimes need 3)")
    parser.add_argument("--n", type=int, default=128, help="grid points per axis (power of two)")
    parser.add_argument("--L", type=float, default=40.0, help="box side length")
    parser.add_argument("--c-norm", type=float, default=1.0, help="noise strength; the split time is 1/c_norm")
    parser.add_argument("--t-end", type=float, default=2.0, help="end of the large-time interval")
    parser.add_argument("--lambda-sign", type=int, default=-1, help="nonlinearity sign")
    parser.add_argument("--amplitude", type=float, default=0.1, help="Gaussian initial amplitude")
    parser.add_argument("--C-est", type=float, default=None, help="generic constant (default: Strichartz estimator)")
    parser.add_argument("--strichartz-samples", type=int, default=8, help="random fields for the Strichartz estimator")
    parser.add_argument("--n-t", type=int, default=51, help="time samples on the interval")
    parser.add_argument("--max-iter", type=int, default=50)
    parser.add_argument("--tol", type=float, default=1e-10, help="stop when the iterate distance falls below")
    parser.add_argument("--n-pairs", type=int, default=20, help="random pairs for the empirical Lipschitz constant")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--path-dt", type=float, default=1e-3, help="Brownian mesh step")
    parser.add_argument("--out", type=Path, default=None, help="JSON report file (default: stdout)")
    parser.set_defaults(handler=run)
    return parser


def run(args) -> int:
    params = validate_params(
        PicardParams,
        dict(
            regime=args.regime,
            d=args.d,
            n=args.n,
            L=args.L,
            c_norm=args.c_norm,
            t_end=args.t_end,
            lambda_sign=args.lambda_sign,
            amplitude=args.amplitude,
            C_est=args.C_est,
            strichartz_samples=args.strichartz_samples,
            n_t=args.n_t,
            max_iter=args.max_iter,
            tol=args.tol,
            n_pairs=args.n_pairs,
            seed=args.seed,
            path_dt=args.path_dt,
        ),
    )
    regime = params.regime
    alpha = energy_critical_alpha(params.d) if regime.is_energy else mass_critical_alpha(params.d)
    model = build_noise_model([params.c_norm], alpha, params.lambda_sign, params.d)
    grid = make_grid(params.d, params.n, params.L)
    T = 1.0 / params.c_norm
    interval = (0.0, T) if regime.is_small_time else (T, params.t_end)

    path = sample_path(model, params.path_dt, interval[1], params.seed)
    h_sup = float(np.max(gbm_interpolant(path, model)(path.times[path.times >= interval[0] - 1e-12])))

    initial = FieldState(grid=grid, values=gaussian(grid, params.amplitude), frame=Frame.RESCALED, time=interval[0])
    if regime.is_small_time:
        value = h_sup
    elif regime.is_energy:
        value = h1_norm_values(initial.values, grid) + 1
    else:
        value = lp_norm(initial.values, grid, 2) + 1

    if params.C_est is not None:
        C_est, source = params.C_est, "given"
    else:
        q, p = metric_pair(model)
        C_est = estimate_strichartz_constant(
            params.d, q, p, grid, params.strichartz_samples, interval[1] - interval[0], params.seed
        )
        source = "strichartz-estimator"
    budget = solve_budget(regime, value, C_est, params.d, C_source=source)
    logger.info(f"🚀 {regime.value} on [{interval[0]:g}, {interval[1]:g}]: budget parameter {budget.parameter:.4g}")

    compare = path_steps(uniform_mesh(interval[0], interval[1], params.n_t), path) is not None
    if not compare:
        logger.warning(f"⚠️ Mesh of {params.n_t} samples misses the path steps (dt={params.path_dt:g}); no integrate() comparison")
    u, report = picard_solve(
        initial,
        path,
        interval,
        model,
        grid,
        n_t=params.n_t,
        max_iter=params.max_iter,
        tol=params.tol,
        budget=budget,
        n_pairs=params.n_pairs,
        seed=params.seed,
        compare_integrate=compare,
    )
    payload = {
        "regime": regime.value,
        "interval": list(interval),
        "budget": budget.model_dump(mode="json"),
        "contraction": report.model_dump(mode="json"),
        "h_sup": h_sup,
        "linear_profile_norm": linear_profile_smallness(initial.evolve(initial.values, time=0.0), params.c_norm, model, params.n_t),
        "seed": params.seed,
    }
    with output_stream(args.out) as stream:
        stream.write(json.dumps(payload, indent=2) + "\n")
    logger.info(f"✅ {report.iterations} iterations, converged={report.converged}")
    return 0
