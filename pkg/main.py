"""Command-line entry point"""

import sys
from typing import Optional, Sequence
import structlog

from cli.context import RunContext
from cli.router import build_parser
from core.config import settings
from core.exceptions import ConfigurationError, handle_command_error
from core.logging import command_context, setup_logging

logger = structlog.get_logger()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.log_level, args.log_format)

    try:
        if args.threads is not None and (args.threads == 0 or args.threads < -1):
            raise ConfigurationError("--threads must be a positive integer or -1", {"threads": args.threads})
        with command_context(args.command, app=settings.APP_NAME, env=settings.APP_ENV):
            ctx = RunContext.from_args(args)
            return args.handler(ctx)
    except Exception as e:
        return handle_command_error(e, debug=settings.DEBUG)


if __name__ == "__main__":
    sys.exit(main())
