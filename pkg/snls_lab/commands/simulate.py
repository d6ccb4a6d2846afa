from pathlib import Path
import argparse
import logging

from snls_lab.commands.common import (
    output_stream,
    parse_key_values,
    validate_params,
    write_json_line,
)
from snls_lab.constants import Frame, ProfileKind
from snls_lab.db.schemas.cli import SimulateParams
from snls_lab.db.schemas.solver import SolverConfig
from snls_lab.numerics.noise import build_noise_model, mass_critical_alpha, sample_path
from snls_lab.numerics.profiles import make_initial
from snls_lab.numerics.snapshot_io import write_snapshot
from snls_lab.numerics.solver import integrate, residual_series
from snls_lab.numerics.spectral import make_grid

logger = logging.getLogger(__name__)

EVENTS = "events.jsonl"


def register(subparsers):
    parser = subparsers.add_parser(
        "simulate",
        help="Integrate one trajectory and emit a JSON-lines event log",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--d", type=int, default=1, help="spatial dimension (1-3)")
    parser.add_argument("--n", type=int, default=256, help="grid points per axis (power of two)")
    parser.add_argument("--L", type=float, default=40.0, help="box side length (length units)")
    parser.add_argument("--dt", type=float, default=1e-3, help="time step (time units)")
    parser.add_argument("--t-end", type=float, default=1.0, help="horizon (time units, multiple of dt)")
    parser.add_argument("--frame", choices=[f.value for f in Frame], default=Frame.PHYSICAL.value)
    parser.add_argument("--phi", default="", help='noise coefficients as "a+bi" literals, comma-separated')
    parser.add_argument("--alpha", type=float, default=None, help="nonlinearity power (default: mass-critical 1+4/d)")
    parser.add_argument("--lambda-sign", type=int, default=-1, help="nonlinearity sign; -1 carries the soliton")
    parser.add_argument("--seed", type=int, default=0, help="path seed")
    parser.add_argument("--record-stride", type=int, default=10, help="steps between event lines")
    parser.add_argument("--profile", choices=[p.value for p in ProfileKind], default=ProfileKind.GAUSSIAN.value)
    parser.add_argument("--profile-param", action="append", metavar="KEY=VALUE", help="profile parameter, repeatable")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: events to stdout)")
    parser.add_argument("--snapshots", action="store_true", help="write full-field snapshots to the output directory")
    parser.set_defaults(handler=run)
    return parser


def run(args) -> int:
    params = validate_params(
        SimulateParams,
        dict(
            d=args.d,
            n=args.n,
            L=args.L,
            dt=args.dt,
            t_end=args.t_end,
            frame=args.frame,
            phi=args.phi,
            alpha=args.alpha,
            lambda_sign=args.lambda_sign,
            seed=args.seed,
            record_stride=args.record_stride,
            profile=args.profile,
            profile_params=parse_key_values(args.profile_param, "profile-param"),
            snapshots=args.snapshots,
        ),
    )
    grid = make_grid(params.d, params.n, params.L)
    alpha = params.alpha if params.alpha is not None else mass_critical_alpha(params.d)
    model = build_noise_model(params.coefficients, alpha, params.lambda_sign, params.d)
    config = SolverConfig(
        grid=grid,
        model=model,
        dt=params.dt,
        t_end=params.t_end,
        frame=params.frame,
        record_stride=params.record_stride,
    )
    initial = make_initial(params.profile, grid, model, params.frame, **params.profile_params)
    path = sample_path(model, params.dt, params.t_end, params.seed)
    logger.info(f"🚀 Integrating d={params.d} n={params.n} alpha={alpha:g} ||c||={model.c_norm:g} to t={params.t_end:g}")
    traj = integrate(config, path, initial)

    residuals = residual_series(traj)
    for snap, residual in zip(traj.snapshots, residuals):
        snap.summary.residual = residual

    out_dir = args.out
    with output_stream(out_dir / EVENTS if out_dir else None) as stream:
        write_json_line(stream, {"event": "config", "config": config.model_dump(mode="json"), "seed": params.seed})
        for snap in traj.snapshots:
            write_json_line(stream, {"event": "snapshot", **snap.summary.model_dump()})
        write_json_line(stream, {"event": "outcome", **traj.outcome.model_dump(mode="json")})

    if params.snapshots and out_dir is not None:
        for k, snap in enumerate(traj.full_snapshots()):
            write_snapshot(out_dir / f"snapshot_{k:04d}.snls", traj.field_at(snap.time))
    logger.info(f"✅ Outcome: {traj.outcome.kind.value}")
    return 0
