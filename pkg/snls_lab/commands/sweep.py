from pathlib import Path
import argparse
import logging

from pydantic import ValidationError

from snls_lab.db.schemas.experiments import SweepConfig
from snls_lab.errors import CliValidationError
from snls_lab.numerics.experiments import persist_run, run_sweep

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser(
        "sweep",
        help="Probability of global scattering across noise strengths",
        description=(
            "Reads a JSON config validated as SweepConfig: grid {d, n, L}, alpha, lambda_sign, dt, t_end, "
            "record_stride, thresholds, c_norm_list, n_paths, base_seed, profile, profile_params, "
            "certificate_eta, certificate_C, snapshot_paths."
        ),
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--config", type=Path, required=True, help="sweep config (JSON)")
    parser.add_argument("--out", type=Path, required=True, help="run directory for manifest, JSONL and CSV outputs")
    parser.add_argument("--workers", type=int, default=None, help="worker processes (default: SNLS_WORKERS or CPU count)")
    parser.set_defaults(handler=run)
    return parser


def load_config(path: Path) -> SweepConfig:
    try:
        text = path.read_text()
    except OSError as e:
        raise CliValidationError(f"cannot read {path}: {e}", parameter="config") from e
    try:
        return SweepConfig.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        parameter = ".".join(str(p) for p in first["loc"]) or "config"
        raise CliValidationError(first["msg"], parameter=parameter) from e


def run(args) -> int:
    sweep = load_config(args.config)
    if args.workers is not None and args.workers < 1:
        raise CliValidationError("workers must be at least 1", parameter="workers")
    logger.info(f"🚀 Sweep {sweep.config_hash()[:12]} into {args.out}")
    report = run_sweep(sweep, workers=args.workers)
    persist_run(report, args.out)
    for s in report.summaries:
        print(f"✅ ||c||={s.strength:g}: P(global)={s.p_hat:.3f} [{s.ci_lo:.3f}, {s.ci_hi:.3f}] "
              f"blowup={s.n_blowup} undecided={s.n_undecided}")
    return 0
