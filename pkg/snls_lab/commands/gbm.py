from pathlib import Path
import argparse
import csv
import logging

from snls_lab.commands.common import output_stream, parse_float_list, validate_params
from snls_lab.constants import EstimateMethod
from snls_lab.db.schemas.cli import GbmParams
from snls_lab.db.schemas.noise import ExceedanceRow
from snls_lab.numerics.noise import decay_exceedance_probability

logger = logging.getLogger(__name__)

COLUMNS = ["c_norm", "epsilon", "method", "p_hat", "ci_lo", "ci_hi", "n_samples", "seed"]


def register(subparsers):
    parser = subparsers.add_parser(
        "gbm",
        help="Probability that h_c exceeds epsilon after time 1/||c|| (CSV table)",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--c-norm", required=True, help="noise strength(s) ||c||, comma-separated")
    parser.add_argument("--epsilon", type=float, required=True, help="exceedance level (dimensionless)")
    parser.add_argument("--alpha", type=float, default=5.0, help="nonlinearity power")
    parser.add_argument(
        "--method", choices=[m.value for m in EstimateMethod], default=EstimateMethod.CLOSED_FORM.value
    )
    parser.add_argument("--n-samples", type=int, default=100_000, help="Monte Carlo paths")
    parser.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
    parser.add_argument("--dt", type=float, default=1e-3, help="reduced-time step of the Monte Carlo walk")
    parser.add_argument("--workers", type=int, default=None, help="worker processes (default: SNLS_WORKERS or CPU count)")
    parser.add_argument("--out", type=Path, default=None, help="CSV file (default: stdout)")
    parser.set_defaults(handler=run)
    return parser


def run(args) -> int:
    params = validate_params(
        GbmParams,
        dict(
            c_norm=parse_float_list(args.c_norm, "c_norm"),
            epsilon=args.epsilon,
            alpha=args.alpha,
            method=args.method,
            n_samples=args.n_samples,
            seed=args.seed,
            dt=args.dt,
        ),
    )
    with output_stream(args.out) as stream:
        writer = csv.writer(stream)
        writer.writerow(COLUMNS)
        for c_norm in params.c_norm:
            estimate = decay_exceedance_probability(
                c_norm,
                params.epsilon,
                params.alpha,
                method=params.method,
                n_samples=params.n_samples,
                seed=params.seed,
                dt=params.dt,
                workers=args.workers,
            )
            row = ExceedanceRow.from_estimate(c_norm, params.epsilon, estimate)
            writer.writerow([getattr(row, c) if c != "method" else row.method.value for c in COLUMNS])
            stream.flush()
    return 0
