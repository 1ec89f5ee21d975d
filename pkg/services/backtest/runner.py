"""Expanding-window backtests: realistic and ex-post selection, MFIN, Long-only and cost sweeps"""

from dataclasses import dataclass, field
from datetime import timedelta
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple
import math
import pandas as pd
import structlog
from joblib import Parallel, delayed

from core.exceptions import DegenerateStatisticError, InsufficientSampleError, NumericalError
from core.logging import metrics_logger
from models.panel import FactorPanel
from models.portfolio import PortfolioSeries, WeightsMatrix
from schemas.config import ResearchConfig
from schemas.mfin import MfinConfig
from schemas.report import Split, SplitPlan
from schemas.strategy import Combo, ComboSelection, ScoredCombo, StrategyKind
from services.backtest.guard import LookaheadGuard
from services.ingest import span_inputs
from services.metrics import sharpe
from services.mfin.hyperband import hyperband_search
from services.mfin.model import TrainedEnsemble
from services.mfin.training import TrainResult, train_ensemble
from services.portfolio import (
    combine_portfolios,
    concat_series,
    ensemble_average,
    estimate_asset_vol,
    mask_undefined_vol,
    portfolio_returns,
    restrict,
    second_layer_scale,
    with_cost,
)
from services.signals import adf_pvalue
from services.strategies import cmb_weights, combo_weights, enumerate_grid, long_only_weights, select_top2, spread_frame

logger = structlog.get_logger()

EX_POST = "ex-post"


@dataclass(eq=False)
class StrategyRun:
    """Out-of-sample result of one strategy kind"""

    kind: str
    series: PortfolioSeries
    selections: List[ComboSelection] = field(default_factory=list)
    split_series: List[PortfolioSeries] = field(default_factory=list)
    mode: str = "realistic"


@dataclass(eq=False)
class MfinRun:
    series: PortfolioSeries
    configs: List[MfinConfig] = field(default_factory=list)
    ensembles: List[TrainedEnsemble] = field(default_factory=list)
    weights: List[WeightsMatrix] = field(default_factory=list)
    member_weights: List[List[WeightsMatrix]] = field(default_factory=list)
    split_series: List[PortfolioSeries] = field(default_factory=list)


class StationarityFilter:
    """Per-asset ADF eligibility of the price-feature spread, cached per (feature, k)"""

    def __init__(self, panel: FactorPanel, threshold: float = 0.01, price_feature: str = "open"):
        self.panel = panel
        self.threshold = threshold
        self.price_feature = price_feature
        self._spreads: Dict[Tuple[str, int], pd.DataFrame] = {}
        self._eligible: Dict[Tuple[str, int], Set[str]] = {}

    def spreads(self, feature: str, k: int) -> pd.DataFrame:
        key = (feature, k)
        if key not in self._spreads:
            self._spreads[key] = spread_frame(self.panel, feature, k, self.price_feature)
        return self._spreads[key]

    def eligible(self, feature: str, k: int) -> Set[str]:
        key = (feature, k)
        if key not in self._eligible:
            spreads = self.spreads(feature, k)
            passed = set()
            for asset in self.panel.assets:
                try:
                    if adf_pvalue(spreads[asset].dropna()) <= self.threshold:
                        passed.add(asset)
                except InsufficientSampleError:
                    continue
            self._eligible[key] = passed
        return self._eligible[key]


class BacktestRunner:
    """Runs every backtest mode over one panel and one experiment configuration"""

    def __init__(self, panel: FactorPanel, config: ResearchConfig, n_jobs: int = 1):
        self.panel = panel
        self.config = config
        self.n_jobs = n_jobs
        self.price_feature = config.universe.price_feature

    # -- portfolio helpers -------------------------------------------------

    def asset_scaled(self, panel: FactorPanel, weights: WeightsMatrix, cost_bps: float) -> PortfolioSeries:
        """Asset-level volatility-scaled returns for every decision date of ``weights`` on ``panel``"""
        p = self.config.portfolio
        vol = estimate_asset_vol(panel, self.price_feature, p.asset_vol_span, p.asset_vol_min_periods, p.annualisation)
        decisions = weights.loc(None, panel.dates[-2]) if weights.dates[-1] >= panel.dates[-1] else weights
        decisions = mask_undefined_vol(decisions, vol)
        return portfolio_returns(decisions, panel.return_frame(self.price_feature), vol, cost_bps, p.sigma_target)

    def doubly_scaled(self, series: PortfolioSeries) -> PortfolioSeries:
        p = self.config.portfolio
        return second_layer_scale(series, p.portfolio_vol_span, p.portfolio_vol_min_periods, p.annualisation)

    def _weights(self, panel: FactorPanel, combo: Combo, stationarity: Optional[StationarityFilter]) -> WeightsMatrix:
        if combo.requires_adf:
            if stationarity is None:
                stationarity = StationarityFilter(panel, self.config.strategies.adf_threshold, self.price_feature)
            k = combo.params.k
            return combo_weights(
                panel,
                combo,
                self.config.strategies,
                eligible=stationarity.eligible(combo.feature, k),
                spreads=(
                    stationarity.spreads(combo.feature, k)
                    if stationarity.panel is panel
                    else spread_frame(panel, combo.feature, k, self.price_feature)
                ),
                price_feature=self.price_feature,
            )
        return combo_weights(panel, combo, self.config.strategies)

    # -- selection ----------------------------------------------------------

    def score_combo(
        self,
        panel: FactorPanel,
        combo: Combo,
        stationarity: Optional[StationarityFilter] = None,
        start=None,
        end=None,
    ) -> ScoredCombo:
        """Sharpe of the asset-scaled net returns at the selection cost over [start, end]"""
        weights = self._weights(panel, combo, stationarity)
        series = self.asset_scaled(panel, weights, self.config.portfolio.selection_cost_bps)
        if start is not None or end is not None:
            series = restrict(series, start, end)
        try:
            value = sharpe(series.net, self.config.portfolio.annualisation)
        except (DegenerateStatisticError, InsufficientSampleError):
            value = math.nan
        return ScoredCombo(combo=combo, sharpe=value)

    def score_grid(
        self,
        kind: StrategyKind,
        panel: FactorPanel,
        start=None,
        end=None,
        stationarity: Optional[StationarityFilter] = None,
    ) -> List[ScoredCombo]:
        combos = enumerate_grid(kind, self.config.grid_features, self.config.strategies)
        if any(c.requires_adf for c in combos):
            stationarity = stationarity or StationarityFilter(panel, self.config.strategies.adf_threshold, self.price_feature)
            # fill the cache before the threads share it
            for feature, k in sorted({(c.feature, c.params.k) for c in combos}):
                stationarity.eligible(feature, k)

        scored = Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(self.score_combo)(panel, c, stationarity, start, end) for c in combos
        )
        logger.info(
            "Grid scored",
            kind=StrategyKind(kind).value,
            combos=len(combos),
            finite=sum(1 for s in scored if math.isfinite(s.sharpe)),
            horizon=str(panel.dates[-1].date()),
        )
        return list(scored)

    def evaluate_selection(
        self,
        panel: FactorPanel,
        selection: ComboSelection,
        start,
        end,
        stationarity: Optional[StationarityFilter] = None,
    ) -> PortfolioSeries:
        """Average of the doubly-scaled pick portfolios over realisation dates [start, end]"""
        cost = self.config.portfolio.cost_bps
        picks = []
        for combo in selection.combos:
            series = self.doubly_scaled(self.asset_scaled(panel, self._weights(panel, combo, stationarity), cost))
            picks.append(restrict(series, start, end).relabel(combo.label()))
        return combine_portfolios(picks, label=selection.kind.value)

    # -- modes ----------------------------------------------------------------

    def run_realistic(self, kind: StrategyKind, plan: SplitPlan) -> StrategyRun:
        """Select on each training span, trade the picks over the following test span"""
        kind = StrategyKind(kind)
        allow_single = len(set(self.config.grid_features)) == 1
        parts, selections = [], []

        for split in plan.splits:
            guard = LookaheadGuard(self.panel, split.train.end)
            train_panel = guard.view()
            stationarity = None
            if kind == StrategyKind.REV:
                stationarity = StationarityFilter(train_panel, self.config.strategies.adf_threshold, self.price_feature)
            scored = self.score_grid(kind, train_panel, stationarity=stationarity)
            selection = select_top2(scored, window=split.test.label(), allow_single=allow_single)

            guard.release(split.test.end)
            part = self.evaluate_selection(guard.view(), selection, split.test.start, split.test.end, stationarity)
            self._log_split(kind.value, split, part)
            parts.append(part)
            selections.append(selection)

        series = concat_series(parts, label=kind.value)
        return StrategyRun(kind=kind.value, series=series, selections=selections, split_series=parts)

    def run_exploration(self, kind: StrategyKind, plan: SplitPlan) -> StrategyRun:
        """Top two combinations chosen on the whole test window itself; not implementable"""
        kind = StrategyKind(kind)
        start, end = plan.splits[0].test.start, plan.splits[-1].test.end
        panel = self.panel.truncate(end)
        scored = self.score_grid(kind, panel, start, end)
        allow_single = len(set(self.config.grid_features)) == 1
        selection = select_top2(scored, window=f"{EX_POST} {start.isoformat()}..{end.isoformat()}", allow_single=allow_single)
        series = self.evaluate_selection(panel, selection, start, end).relabel(f"{kind.value} ({EX_POST})")
        return StrategyRun(kind=kind.value, series=series, selections=[selection], mode=EX_POST)

    def run_long_only(self, plan: SplitPlan) -> StrategyRun:
        """Unit weights through the same two scaling stages, over the test window"""
        start, end = plan.splits[0].test.start, plan.splits[-1].test.end
        panel = self.panel.truncate(end)
        scaled = self.doubly_scaled(self.asset_scaled(panel, long_only_weights(panel), self.config.portfolio.cost_bps))
        series = restrict(scaled, start, end).relabel(StrategyKind.LONG_ONLY.value)
        return StrategyRun(kind=StrategyKind.LONG_ONLY.value, series=series)

    def run_cmb(self, runs: Sequence[StrategyRun], label: str = StrategyKind.CMB.value) -> StrategyRun:
        combined = cmb_weights([r.series for r in runs], label=label)
        return StrategyRun(kind=label, series=combined)

    def run_mfin(
        self,
        plan: SplitPlan,
        seeds: Optional[Sequence[int]] = None,
        search: Optional[bool] = None,
        on_split: Optional[Callable[[Split, MfinConfig, List[TrainResult]], None]] = None,
    ) -> MfinRun:
        """Per split: search, train the seed ensemble, trade its averaged weights over the test span.

        The asset-scaled test spans are chained and the second scaling layer
        is applied to the chained stream.
        """
        seeds = list(self.config.backtest.seeds if seeds is None else seeds)
        search = self.config.hyperband.enabled if search is None else search
        p = self.config.portfolio
        run = MfinRun(series=None)
        parts = []

        for split in plan.splits:
            guard = LookaheadGuard(self.panel, split.train.end)
            train_panel = guard.view()
            inputs = span_inputs(train_panel, train_panel.dates[0], split.train.end, p.sigma_target, self.price_feature)

            mfin_config = self.config.mfin
            if search:
                mfin_config = hyperband_search(
                    self.config.search, inputs, mfin_config, self.config.hyperband, seed=seeds[0], n_jobs=self.n_jobs
                ).config
            results = train_ensemble(mfin_config, inputs, seeds, n_jobs=self.n_jobs)
            if on_split is not None:
                on_split(split, mfin_config, results)
            ensemble = TrainedEnsemble(config=mfin_config, models=[r.model for r in results])

            guard.release(split.test.end)
            test_panel = guard.view()
            last_decision = split.test.end - timedelta(days=1)
            members = ensemble.member_weights(
                test_panel, split.test.start - timedelta(days=1), last_decision, p.sigma_target, self.price_feature
            )
            weights = ensemble_average(members, label=StrategyKind.MFIN.value)
            part = self.asset_scaled(test_panel, weights, p.cost_bps)
            self._log_split(StrategyKind.MFIN.value, split, part)

            parts.append(part)
            run.configs.append(mfin_config)
            run.ensembles.append(ensemble)
            run.weights.append(weights)
            run.member_weights.append(members)

        run.split_series = parts
        run.series = self.doubly_scaled(concat_series(parts, label=StrategyKind.MFIN.value))
        return run

    def _log_split(self, kind: str, split: Split, part: PortfolioSeries):
        try:
            value = sharpe(part.net, self.config.portfolio.annualisation)
        except NumericalError:
            value = math.nan
        metrics_logger.log_strategy_metric(
            kind, "split_sharpe", value, tags={"split": str(split.index), "test": split.test.label()}
        )


def cost_sweep(series: Mapping[str, PortfolioSeries], cost_grid: Sequence[float], annualisation: int = 252) -> pd.DataFrame:
    """Net Sharpe per strategy (rows) and cost coefficient in bps (columns)"""
    rows = {}
    for name, s in series.items():
        values = []
        for c in cost_grid:
            try:
                values.append(sharpe(with_cost(s, c).net, annualisation))
            except NumericalError:
                values.append(math.nan)
        rows[name] = values
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=[float(c) for c in cost_grid])
    frame.index.name = "strategy"
    frame.columns.name = "cost_bps"

    constant = [name for name, s in series.items() if float(s.turnover.abs().sum()) == 0.0]
    if constant:
        logger.info("Strategies without turnover are cost insensitive", strategies=constant)
    return frame


def selection_frequency(selections: Sequence[ComboSelection]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for s in selections:
        for pick in s.picks:
            counts[pick.feature] = counts.get(pick.feature, 0) + 1
    return counts
