"""explore: ex-post top-two selection on the whole test window (not implementable)"""

import structlog

from cli.context import RunContext
from repositories.report_repository import file_stem
from schemas.strategy import StrategyKind
from services.backtest.reporting import exploration_table
from services.backtest.runner import EX_POST, BacktestRunner

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("explore", help="Ex-post exploration table of the grid strategies")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    panel = ctx.load_panel()
    plan = ctx.split_plan(panel)
    runner = BacktestRunner(panel, ctx.config, n_jobs=ctx.threads)

    runs = [runner.run_exploration(kind, plan) for kind in ctx.config.strategies.kinds]
    cmb = runner.run_cmb(runs)
    cmb.series = cmb.series.relabel(f"{StrategyKind.CMB.value} ({EX_POST})")
    cmb.mode = EX_POST
    benchmark = runner.run_long_only(plan).series.net

    table = exploration_table(runs + [cmb], benchmark)
    reports = ctx.reports
    reports.write_table("exploration", table)
    reports.write_json("exploration_selections", [r.selections[0].model_dump(mode="json") for r in runs])
    for run_ in runs + [cmb]:
        reports.write_series(f"{EX_POST}/{file_stem(run_.kind)}", run_.series)

    logger.warning("Exploration results use the evaluation window for selection", label=EX_POST)
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    return 0
