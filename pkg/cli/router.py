"""CLI main router"""

import argparse

from cli.commands import (
    backtest,
    cost_sweep,
    explore,
    ingest,
    param_count,
    report,
    train_mfin,
)
from core.config import settings

# Registration order is the order shown in --help
COMMANDS = (ingest, explore, backtest, train_mfin, cost_sweep, report, param_count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factor-research",
        description=f"{settings.APP_NAME}: multi-factor strategies and MFIN backtests",
    )
    parser.add_argument("--config", help="Experiment TOML file")
    parser.add_argument("--data-dir", help="Panel directory root (default: DATA_DIR)")
    parser.add_argument("--out-dir", help="Report and checkpoint directory (default: OUT_DIR)")
    parser.add_argument("--seed", type=int, help="Offset added to every configured seed (default: SEED)")
    parser.add_argument("--threads", type=int, help="Worker threads, -1 for all cores (default: THREADS)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: LOG_LEVEL)")
    parser.add_argument("--log-format", choices=["json", "console"], help="Log renderer (default: LOG_FORMAT)")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser
