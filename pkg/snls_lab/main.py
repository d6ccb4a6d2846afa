"""
Command-line entry point: `python -m snls_lab <subcommand>`.

Every SNLSError ends the run with one JSON line on stderr,
{"error": code, "parameter": name or null, "detail": text}; exit code 2 for
validation failures and unknown flags, 1 for runtime failures.
"""
from typing import List, Optional
import argparse
import json
import logging
import sys

from pydantic import ValidationError

import snls_lab
from snls_lab.commands import gbm, picard, selftest, simulate, sweep
from snls_lab.dependencies import get_log_level
from snls_lab.errors import CliValidationError, SNLSError, UnknownFlagError

logger = logging.getLogger(__name__)

USAGE_ERRORS = (CliValidationError, UnknownFlagError)


class CliParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors share one reporting path."""

    def error(self, message):
        if "unrecognized arguments" in message:
            raise UnknownFlagError(message, parameter=message.split(":", 1)[-1].strip().split(" ")[0] or None)
        parameter = None
        if "argument " in message:
            parameter = message.split("argument ", 1)[1].split(":", 1)[0].split("/")[0].lstrip("-")
        raise CliValidationError(message, parameter=parameter)


def build_parser() -> CliParser:
    parser = CliParser(prog="snls_lab", description="Numerical laboratory for the stochastic NLS")
    parser.add_argument("--version", action="version", version=f"%(prog)s {snls_lab.__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="debug logging (default level: SNLS_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    for command in (simulate, sweep, gbm, picard, selftest):
        command.register(subparsers)
    return parser


def configure_logging(verbose: int = 0):
    logging.basicConfig(
        level=get_log_level(verbose),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose)
        return args.handler(args)
    except SNLSError as e:
        sys.stderr.write(json.dumps(e.to_dict()) + "\n")
        if not isinstance(e, USAGE_ERRORS):
            logger.error(f"❌ {e.code}: {e.detail}")
        return 2 if isinstance(e, USAGE_ERRORS) else 1
    except ValidationError as e:
        first = e.errors()[0]
        error = CliValidationError(first["msg"], parameter=".".join(str(p) for p in first["loc"]) or None)
        sys.stderr.write(json.dumps(error.to_dict()) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
