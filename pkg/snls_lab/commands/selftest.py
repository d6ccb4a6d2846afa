import argparse
import logging

from snls_lab.numerics.selftest import CHECKS, run_selftest

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser(
        "selftest",
        help="Run the fast identity checks of every module",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--only", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    parser.set_defaults(handler=run)
    return parser


def run(args) -> int:
    results = run_selftest(args.only)
    for r in results:
        print(f"✅ {r.name}" if r.passed else f"❌ {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0
