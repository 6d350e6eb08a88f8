"""
Command-line entry point
"""
import argparse
import json
import sys
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from hgfc import __version__  # noqa: E402
from hgfc.commands.experiments import run_command, sweep_command  # noqa: E402
from hgfc.commands.generate import gen_command  # noqa: E402
from hgfc.commands.verify import verify_command  # noqa: E402
from hgfc.exceptions import (  # noqa: E402
    EXIT_INVARIANT_FAILED,
    EXIT_OK,
    HGFCException,
    handle_hgfc_exception,
    handle_unexpected_exception,
)
from hgfc.logging_config import configure_logging  # noqa: E402
from hgfc.middleware.run_context import new_run_id  # noqa: E402


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="ExperimentConfig JSON file")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--delta", type=float, help="Slot width")
    parser.add_argument("--epsilon", type=float, help="Speed augmentation")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--algorithm", choices=["hdf", "alg2", "alg3", "hrdf"])
    parser.add_argument("--benchmark", choices=["oracle", "lp", "brute"])
    parser.add_argument("--trials", type=int)
    parser.add_argument("--instance", help="Run on this instance file instead of generating")
    parser.add_argument("--workers", type=int, help="Worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgfc",
        description="Online scheduling experiments for generalized fractional completion time"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Log level, defaults to HGFC_LOG_LEVEL")
    parser.add_argument("--log-format", choices=["console", "json"])
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate instance files")
    _experiment_flags(gen)
    gen.set_defaults(handler=gen_command)

    run = commands.add_parser("run", help="Run an experiment and verify it")
    _experiment_flags(run)
    run.set_defaults(handler=run_command)

    sweep = commands.add_parser("sweep", help="Run every point of the config's sweep grid")
    _experiment_flags(sweep)
    sweep.set_defaults(handler=sweep_command)

    verify = commands.add_parser("verify", help="Re-derive summary rows from ledgers")
    verify.add_argument("ledgers", nargs="*", help="Ledger files; default is every ledger under --out")
    verify.add_argument("--out", help="Output directory to scan")
    verify.set_defaults(handler=verify_command)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Exit codes: 0 success, 1 failed invariant, 2 domain error, 70 internal error
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    run_id = new_run_id()

    try:
        response = args.handler(args, run_id)
    except HGFCException as e:
        return handle_hgfc_exception(e, run_id)
    except Exception as e:
        return handle_unexpected_exception(e, run_id)

    print(json.dumps(response.model_dump(), default=str, indent=2))
    return EXIT_OK if response.ok else EXIT_INVARIANT_FAILED


if __name__ == "__main__":
    sys.exit(main())
