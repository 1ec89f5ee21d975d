"""report: metrics, correlations and equity curves of stored backtest series"""

from typing import Dict, Mapping, Sequence
import structlog

from cli.context import RunContext
from core.exceptions import ConfigurationError
from models.panel import FactorPanel
from models.portfolio import PortfolioSeries, Stage
from repositories.report_repository import file_stem
from schemas.strategy import StrategyKind
from services.backtest.reporting import correlation_table, equity_curves, metrics_table
from services.portfolio import portfolio_from_positions

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("report", help="Metrics table, correlation matrix and equity curves")
    parser.add_argument("--svg", action="store_true", help="Also draw the equity curves as an SVG chart")
    parser.set_defaults(handler=run)


def load_portfolio(ctx: RunContext, panel: FactorPanel, name: str) -> PortfolioSeries:
    """Rebuild a stored doubly-scaled series from its positions"""
    stem = file_stem(name)
    frame = ctx.reports.read_series(stem)
    positions = ctx.reports.read_positions(stem)
    p = ctx.config.portfolio
    return portfolio_from_positions(
        positions,
        panel.return_frame(ctx.config.universe.price_feature),
        cost_bps=p.cost_bps,
        sigma_target=p.sigma_target,
        stage=Stage.DOUBLY_SCALED,
        label=name,
        scale_factor=frame["scale_factor"],
    )


def load_portfolios(ctx: RunContext, panel: FactorPanel, names: Sequence[str]) -> Dict[str, PortfolioSeries]:
    if not names:
        raise ConfigurationError("The run manifest lists no strategies; run 'backtest' first")
    return {name: load_portfolio(ctx, panel, name) for name in names}


def build_reports(ctx: RunContext, series: Mapping[str, PortfolioSeries], svg: bool = False):
    """Write metrics, correlation and equity tables; Long-only is the benchmark when present"""
    b = ctx.config.backtest
    benchmark = series[StrategyKind.LONG_ONLY.value].net if StrategyKind.LONG_ONLY.value in series else None

    table, reports = metrics_table(series, benchmark, b.benchmark_sharpe, b.psr_confidence)
    ctx.reports.write_table("metrics", table)
    ctx.reports.write_json("metrics_reports", {name: r.model_dump() for name, r in reports.items()})
    ctx.reports.write_table("correlation", correlation_table(series))

    curves = equity_curves(series)
    ctx.reports.write_table("equity", curves, json_copy=False)
    if svg:
        ctx.reports.write_chart("equity", curves)

    logger.info("Reports written", strategies=list(series), out_dir=str(ctx.out_dir))
    return table


def run(ctx: RunContext) -> int:
    manifest = ctx.reports.read_manifest()
    if manifest.config_hash != ctx.config.config_hash():
        logger.warning("Configuration differs from the one recorded in the run manifest")

    panel = ctx.load_panel()
    series = load_portfolios(ctx, panel, manifest.strategies)
    table = build_reports(ctx, series, svg=ctx.args.svg)
    print(table.to_string(float_format=lambda v: f"{v:.2f}"))
    return 0
