"""param-count: trainable parameters of MFIN by hyperparameter and asset count"""

import structlog

from cli.context import RunContext
from services.mfin.complexity import ASSET_COLUMNS, DEFAULT_INPUTS, breakdown_table, complexity_table

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("param-count", help="Parameter-count table of the MFIN architecture")
    parser.add_argument("--assets", type=int, nargs="+", default=list(ASSET_COLUMNS), help="Asset counts N_A")
    parser.add_argument("--inputs", type=int, default=DEFAULT_INPUTS, help="Features per asset N_I")
    parser.add_argument("--days", type=int, help="Training days for the datapoints row (default: calendar length)")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    calendar = ctx.config.calendar
    days = args.days if args.days is not None else (calendar.end - calendar.start).days + 1

    table = complexity_table(args.inputs, days, args.assets, ctx.config.mfin)
    breakdown = breakdown_table(ctx.config.mfin, args.assets, args.inputs)
    ctx.reports.write_table("param_count", table)
    ctx.reports.write_table("param_breakdown", breakdown)

    logger.info("Parameter counts computed", rows=len(table), n_inputs=args.inputs, days=days)
    print(table.to_string())
    print()
    print(breakdown.to_string())
    return 0
