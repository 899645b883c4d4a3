"""
fixiter - command line entry point
"""
import asyncio
import logging
import sys
from typing import Optional, Sequence

from fixiter.api.cli import build_parser, dispatch
from fixiter.core.config import get_settings
from fixiter.core.errors import FixIterError

logger = logging.getLogger("fixiter")


def configure_logging(level: Optional[str] = None):
    """Log to stderr; stdout carries command output only"""
    level = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Exit codes: 0 success, 2 configuration or hypothesis error,
    3 numerical failure or non-convergence, 4 delay-problem condition failure
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        return asyncio.run(dispatch(args))
    except FixIterError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(f"fixiter: {e.message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
