"""backtest: realistic expanding-window runs of every strategy, MFIN included"""

from typing import Dict, List
import structlog

from cli.commands.report import build_reports
from cli.context import RunContext
from models.portfolio import PortfolioSeries
from repositories.report_repository import file_stem
from schemas.mfin import MfinConfig
from schemas.report import Split
from schemas.strategy import StrategyKind
from services.backtest.reporting import selection_table, split_sharpe_table
from services.backtest.runner import BacktestRunner, StrategyRun
from services.mfin.training import TrainResult

logger = structlog.get_logger()

CMB_MFIN = "CMB + MFIN"


def register(subparsers):
    parser = subparsers.add_parser("backtest", help="Realistic backtest with per-split selection and MFIN")
    parser.add_argument("--skip-mfin", action="store_true", help="Run the rule-based strategies only")
    parser.add_argument("--no-search", action="store_true", help="Train the configured MFIN block without Hyperband")
    parser.add_argument("--seeds", type=int, help="Use only the first N configured seeds")
    parser.add_argument("--svg", action="store_true", help="Also draw the equity curves as an SVG chart")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    panel = ctx.load_panel()
    plan = ctx.split_plan(panel)
    runner = BacktestRunner(panel, ctx.config, n_jobs=ctx.threads)
    reports = ctx.reports

    grid_runs = [runner.run_realistic(kind, plan) for kind in ctx.config.strategies.kinds]
    cmb = runner.run_cmb(grid_runs)
    long_only = runner.run_long_only(plan)

    series: Dict[str, PortfolioSeries] = {}
    splits: Dict[str, List[PortfolioSeries]] = {r.kind: r.split_series for r in grid_runs}

    if not args.skip_mfin:
        def save_checkpoints(split: Split, config: MfinConfig, results: List[TrainResult]):
            for result in results:
                ctx.checkpoints.save(result, split.index)
            reports.write_json(f"mfin/split_{split.index}_config", config)

        mfin = runner.run_mfin(
            plan,
            seeds=ctx.seeds(args.seeds),
            search=False if args.no_search else None,
            on_split=save_checkpoints,
        )
        series[StrategyKind.MFIN.value] = mfin.series
        splits[StrategyKind.MFIN.value] = mfin.split_series
        for split, weights, members in zip(plan.splits, mfin.weights, mfin.member_weights):
            reports.write_weights(f"mfin_split_{split.index}", weights)
            for member in members:
                reports.write_weights(f"mfin_split_{split.index}_seed_{member.provenance['seed']}", member)

    for r in grid_runs:
        series[r.kind] = r.series
    series[StrategyKind.CMB.value] = cmb.series
    if StrategyKind.MFIN.value in series:
        mfin_run = StrategyRun(kind=StrategyKind.MFIN.value, series=series[StrategyKind.MFIN.value])
        series[CMB_MFIN] = runner.run_cmb([cmb, mfin_run], label=CMB_MFIN).series
    series[StrategyKind.LONG_ONLY.value] = long_only.series

    for name, s in series.items():
        reports.write_series(file_stem(name), s)
    reports.write_table("selections", selection_table(grid_runs))
    reports.write_json("selections", [s.model_dump(mode="json") for r in grid_runs for s in r.selections])
    reports.write_table("split_sharpe", split_sharpe_table(splits, [s.test.label() for s in plan.splits]))
    reports.write_manifest(ctx.manifest(list(series), plan))

    table = build_reports(ctx, series, svg=args.svg)
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    return 0
