"""cost-sweep: net Sharpe of each backtested strategy across cost coefficients"""

import structlog

from cli.commands.report import load_portfolios
from cli.context import RunContext
from services.backtest.runner import cost_sweep

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("cost-sweep", help="Sharpe after costs for every stored strategy")
    parser.add_argument("--costs", type=float, nargs="+", help="Cost coefficients in bps (default: configured grid)")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    manifest = ctx.reports.read_manifest()
    grid = ctx.args.costs or ctx.config.backtest.cost_grid

    panel = ctx.load_panel()
    series = load_portfolios(ctx, panel, manifest.strategies)
    table = cost_sweep(series, grid, ctx.config.portfolio.annualisation)
    ctx.reports.write_table("cost_sweep", table)

    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    return 0
