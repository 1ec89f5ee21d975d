"""Synthetic panels, series and configurations shared by the tests"""

from pathlib import Path
from typing import Iterable, Optional, Sequence
import numpy as np
import pandas as pd

from models.panel import Calendar, FactorPanel
from models.portfolio import PortfolioSeries
from schemas.config import (
    BacktestConfig,
    CalendarConfig,
    DataSource,
    FeatureSpec,
    HyperbandConfig,
    ResearchConfig,
    StrategyConfig,
    UniverseConfig,
)
from schemas.mfin import MfinConfig
from schemas.strategy import StrategyKind
from services.ingest import assemble_panel
from services.portfolio import portfolio_from_positions

ASSETS = ("AAA", "BBB")
FEATURES = ("open", "signal", "noise")


def make_panel(
    levels: np.ndarray,
    assets: Sequence[str] = ASSETS,
    features: Sequence[str] = FEATURES,
    start: str = "2020-01-01",
    ew_span: int = 63,
    ew_min_periods: int = 10,
) -> FactorPanel:
    """Panel from a (days, assets, features) level array"""
    calendar = Calendar.daily(start, pd.Timestamp(start) + pd.Timedelta(days=levels.shape[0] - 1))
    return assemble_panel(calendar, assets, features, levels, ew_span=ew_span, ew_min_periods=ew_min_periods)


def random_walk_levels(rng: np.random.Generator, shape, vol: float = 0.02, start: float = 100.0) -> np.ndarray:
    """Geometric random walks along axis 0"""
    shocks = rng.normal(0.0, vol, size=shape)
    shocks[0] = 0.0
    return start * np.exp(np.cumsum(shocks, axis=0))


def random_walk_panel(
    n_days: int = 400,
    assets: Sequence[str] = ASSETS,
    features: Sequence[str] = FEATURES,
    seed: int = 0,
    start: str = "2020-01-01",
) -> FactorPanel:
    rng = np.random.default_rng(seed)
    levels = random_walk_levels(rng, (n_days, len(assets), len(features)))
    return make_panel(levels, assets, features, start)


def trending_returns(rng: np.random.Generator, n_days: int, block: int = 200, sigma: float = 0.01) -> np.ndarray:
    """Daily returns whose drift alternates between +sigma and -sigma every ``block`` days"""
    drift = np.where((np.arange(n_days) // block) % 2 == 0, sigma, -sigma)
    return drift + rng.normal(0.0, sigma, n_days)


def momentum_panel(n_days: int = 2520, seed: int = 0, start: str = "2015-01-01") -> FactorPanel:
    """Price and 'trend' share trending levels; 'noise' is an unrelated random walk"""
    rng = np.random.default_rng(seed)
    levels = np.empty((n_days, len(ASSETS), 3))
    for a in range(len(ASSETS)):
        returns = trending_returns(rng, n_days)
        returns[0] = 0.0
        price = 100.0 * np.cumprod(1.0 + returns)
        levels[:, a, 0] = price
        levels[:, a, 1] = price
        levels[:, a, 2] = random_walk_levels(rng, n_days)
    return make_panel(levels, ASSETS, ("open", "trend", "noise"), start)


def cointegrated_panel(
    n_days: int = 2000,
    half_life: float = 5.0,
    seed: int = 0,
    start: str = "2015-01-01",
    with_drifting_asset: bool = False,
) -> FactorPanel:
    """log price = common walk + OU deviation; the feature follows the common walk only.

    ``with_drifting_asset`` adds BBB, whose log price and feature drift apart by
    a doubly integrated walk, so its k-day return spread keeps a unit root.
    """
    rng = np.random.default_rng(seed)
    phi = 0.5 ** (1.0 / half_life)
    common = np.cumsum(rng.normal(0.0, 0.002, n_days))
    deviation = np.zeros(n_days)
    for t in range(1, n_days):
        deviation[t] = phi * deviation[t - 1] + rng.normal(0.0, 0.02)
    assets = ("AAA", "BBB") if with_drifting_asset else ("AAA",)
    levels = np.empty((n_days, len(assets), 2))
    levels[:, 0, 0] = 100.0 * np.exp(common + deviation)
    levels[:, 0, 1] = 50.0 * np.exp(common)
    if with_drifting_asset:
        gap = np.cumsum(np.cumsum(rng.normal(0.0, 5e-5, n_days)))
        levels[:, 1, 0] = 100.0 * np.exp(common)
        levels[:, 1, 1] = 50.0 * np.exp(common - gap)
    return make_panel(levels, assets, ("open", "cointegrated"), start)


def ou_series(rng: np.random.Generator, n: int, half_life: float = 5.0, sigma: float = 1.0) -> np.ndarray:
    phi = 0.5 ** (1.0 / half_life)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.normal(0.0, sigma)
    return x


def research_config(
    start: str,
    end: str,
    first_test_start: str,
    grid_features: Iterable[str] = ("signal", "noise"),
    kinds: Sequence[StrategyKind] = (StrategyKind.MOP,),
    seeds: Sequence[int] = (0, 1),
    mfin: Optional[MfinConfig] = None,
    **strategy_overrides,
) -> ResearchConfig:
    """Small experiment over the synthetic assets with 'open' as the price"""
    features = [FeatureSpec(name="open", source=DataSource.CMC)] + [
        FeatureSpec(name=f, source=DataSource.BIC) for f in grid_features
    ]
    return ResearchConfig(
        calendar=CalendarConfig(start=start, end=end, first_test_start=first_test_start),
        universe=UniverseConfig(assets=list(ASSETS), features=features),
        strategies=StrategyConfig(kinds=list(kinds), **strategy_overrides),
        mfin=mfin or tiny_mfin(),
        hyperband=HyperbandConfig(enabled=False),
        backtest=BacktestConfig(seeds=list(seeds)),
    )


def tiny_mfin(**overrides) -> MfinConfig:
    """MFIN small enough to train inside a unit test"""
    values = dict(
        window=20,
        batch_size=20,
        max_epochs=3,
        early_stopping=5,
        hidden_size=4,
        n_filters=2,
        ts_filter_length=3,
        dropout_rate=0.0,
        learning_rate=1e-2,
    )
    values.update(overrides)
    return MfinConfig(**values)


def series_from_positions(
    positions: np.ndarray,
    returns: np.ndarray,
    start: str = "2020-01-01",
    cost_bps: float = 0.0,
    label: str = "test",
) -> PortfolioSeries:
    index = pd.date_range(start, periods=positions.shape[0], freq="D", name="date")
    columns = [f"A{i}" for i in range(positions.shape[1])]
    return portfolio_from_positions(
        pd.DataFrame(positions, index=index, columns=columns),
        pd.DataFrame(returns, index=index, columns=columns),
        cost_bps=cost_bps,
        label=label,
    )


def write_csv(path: Path, header: str, rows: Iterable[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path
