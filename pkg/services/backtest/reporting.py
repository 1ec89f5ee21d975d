"""Report tables and charts built from backtest results"""

from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union
import math
import matplotlib
import pandas as pd
import structlog
from matplotlib.figure import Figure

from core.exceptions import NumericalError
from models.portfolio import PortfolioSeries
from schemas.report import EXPLORATION_COLUMNS, METRICS_COLUMNS, MetricsReport
from schemas.strategy import Pick, SelectionTable
from services.backtest.runner import EX_POST, StrategyRun
from services.metrics import correlation_matrix, equity_curve, metrics_report, sharpe

logger = structlog.get_logger()


def _returns(series: Union[PortfolioSeries, pd.Series]) -> pd.Series:
    return series.net if isinstance(series, PortfolioSeries) else series


def metrics_table(
    series: Mapping[str, PortfolioSeries],
    benchmark: Optional[pd.Series] = None,
    benchmark_sr: float = 0.0,
    confidence: float = 0.99,
) -> Tuple[pd.DataFrame, Dict[str, MetricsReport]]:
    """Performance table in the standard column order, one row per strategy"""
    reports = {
        name: metrics_report(s, benchmark=benchmark, label=name, benchmark_sr=benchmark_sr, confidence=confidence)
        for name, s in series.items()
    }
    frame = pd.DataFrame({name: r.row() for name, r in reports.items()}).T
    frame = frame.reindex(columns=METRICS_COLUMNS)
    frame.index.name = "strategy"
    return frame, reports


def correlation_table(series: Mapping[str, Union[PortfolioSeries, pd.Series]]) -> pd.DataFrame:
    """Pearson above the diagonal, Spearman below"""
    return correlation_matrix({name: _returns(s) for name, s in series.items()})


def equity_curves(series: Mapping[str, Union[PortfolioSeries, pd.Series]]) -> pd.DataFrame:
    """Compounded equity of each strategy, starting from 1"""
    curves = {}
    for name, s in series.items():
        returns = _returns(s).fillna(0.0)
        curves[name] = pd.Series(equity_curve(returns), index=returns.index)
    frame = pd.DataFrame(curves)
    frame.index.name = "date"
    return frame


def _pick_text(pick: Pick) -> str:
    params = ", ".join(f"{k}={v}" for k, v in pick.params.items())
    return f"{pick.feature} ({params})"


def selection_table(runs: Sequence[StrategyRun]) -> pd.DataFrame:
    """Test window (rows) x strategy kind (columns), picks joined by ' | '"""
    table = SelectionTable(rows=[s for run in runs for s in run.selections])
    frame = pd.DataFrame(
        {
            window: {kind: " | ".join(_pick_text(p) for p in picks) for kind, picks in kinds.items()}
            for window, kinds in table.by_window().items()
        }
    ).T
    frame.index.name = "test_window"
    return frame


def exploration_table(runs: Sequence[StrategyRun], benchmark: Optional[pd.Series] = None) -> pd.DataFrame:
    """Ex-post top-two results; these selections used the evaluation window"""
    rows = []
    for run in runs:
        picks = run.selections[0].picks if run.selections else []
        row = metrics_report(run.series, benchmark=benchmark, label=run.series.label).row()
        rows.append(
            {
                "strategy": f"{run.kind} ({EX_POST})",
                "feature": " | ".join(p.feature for p in picks),
                "params": " | ".join(", ".join(f"{k}={v}" for k, v in p.params.items()) for p in picks),
                **{k: row[k] for k in EXPLORATION_COLUMNS if k in row},
            }
        )
    frame = pd.DataFrame(rows, columns=EXPLORATION_COLUMNS)
    return frame.set_index("strategy")


def split_sharpe_table(runs: Mapping[str, Sequence[PortfolioSeries]], labels: Sequence[str]) -> pd.DataFrame:
    """Net Sharpe of each test span per strategy"""
    rows = {}
    for name, parts in runs.items():
        values = []
        for part in parts:
            try:
                values.append(sharpe(part.net))
            except NumericalError:
                values.append(math.nan)
        rows[name] = values
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=list(labels))
    frame.index.name = "strategy"
    return frame


def plot_equity(curves: pd.DataFrame, path: Path, title: str = "Cumulative returns") -> Path:
    """Line chart of equity curves; format follows the file suffix"""
    fig = Figure(figsize=(10, 5))
    ax = fig.subplots()
    for name in curves.columns:
        ax.plot(curves.index, curves[name], label=name, linewidth=1.2)
    ax.set_title(title)
    ax.set_ylabel("Equity")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper left", fontsize="small")
    fig.autofmt_xdate()
    # fixed salt and no date keep reruns byte-identical
    with matplotlib.rc_context({"svg.hashsalt": "equity"}):
        fig.savefig(path, metadata={"Date": None})
    logger.info("Chart written", path=str(path), series=list(curves.columns))
    return path
