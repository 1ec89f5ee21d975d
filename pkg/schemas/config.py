"""Experiment configuration loaded from TOML"""

import hashlib

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import date
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
import structlog

from core.exceptions import ConfigurationError
from schemas.mfin import HyperbandConfig, MfinConfig, SearchSpace
from schemas.strategy import StrategyKind

logger = structlog.get_logger()


class DataSource(str, Enum):
    CMC = "CMC"
    BIC = "BIC"
    BC = "BC"
    GT = "GT"


# Preference order when one (asset, feature) appears in several sources
SOURCE_PRIORITY = {DataSource.CMC: 0, DataSource.BIC: 1, DataSource.BC: 2, DataSource.GT: 3}

DEFAULT_ASSETS = ["BCH", "BTC", "DASH", "DOGE", "ETH", "LTC", "ZEC"]

CMC_FEATURES = ["open", "high", "low", "close", "volume", "market_cap"]
BIC_FEATURES = [
    "transactions",
    "block_size",
    "sent_addresses",
    "sent_usd",
    "difficulty",
    "mining_profitability",
    "hashrate",
    "avg_transaction_size",
    "avg_transaction_value",
    "confirmation_time",
    "tweets",
    "google_trends",
]
BC_FEATURES = [
    "fee_reward_ratio",
    "chain_size_increase",
    "coin_days_destroyed",
    "cost_per_transaction",
]


class FeatureSpec(BaseModel):
    name: str
    source: DataSource


def default_features() -> List[FeatureSpec]:
    return (
        [FeatureSpec(name=n, source=DataSource.CMC) for n in CMC_FEATURES]
        + [FeatureSpec(name=n, source=DataSource.BIC) for n in BIC_FEATURES]
        + [FeatureSpec(name=n, source=DataSource.BC) for n in BC_FEATURES]
    )


class CalendarConfig(BaseModel):
    start: date = date(2018, 1, 1)
    end: date = date(2023, 3, 31)
    first_test_start: date = date(2019, 4, 1)
    test_increment_years: int = Field(1, ge=1)
    min_train_days: int = Field(365, ge=1)
    valid_fraction: float = Field(0.1, gt=0, lt=1)

    @model_validator(mode="after")
    def check_bounds(self):
        if self.end <= self.start:
            raise ValueError("calendar end must follow start")
        if not self.start < self.first_test_start <= self.end:
            raise ValueError("first_test_start must fall inside the calendar")
        return self


class UniverseConfig(BaseModel):
    assets: List[str] = Field(default_factory=lambda: list(DEFAULT_ASSETS))
    features: List[FeatureSpec] = Field(default_factory=default_features)
    price_feature: str = "open"

    @model_validator(mode="after")
    def check_universe(self):
        names = self.feature_names
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if len(set(self.assets)) != len(self.assets):
            raise ValueError("asset names must be unique")
        if self.price_feature not in names:
            raise ValueError(f"price feature '{self.price_feature}' is not in the feature list")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def alternative_features(self) -> List[str]:
        return [f.name for f in self.features if f.source in (DataSource.BIC, DataSource.BC)]


class MissingDataPolicy(BaseModel):
    forward_fill: bool = Field(True, description="Forward-fill gaps after first availability")
    neutral_fill: bool = Field(False, description="Allow an (asset, feature) to be absent; it is fully masked")


class PanelConfig(BaseModel):
    ew_span: int = Field(63, ge=2)
    ew_min_periods: int = Field(10, ge=2)
    policy: MissingDataPolicy = Field(default_factory=MissingDataPolicy)


class PortfolioConfig(BaseModel):
    sigma_target: float = Field(0.15, gt=0)
    asset_vol_span: int = Field(63, ge=2)
    asset_vol_min_periods: int = Field(10, ge=2)
    portfolio_vol_span: int = Field(21, ge=2)
    portfolio_vol_min_periods: int = Field(21, ge=2)
    cost_bps: float = Field(0.0, ge=0, description="Evaluation cost coefficient C")
    selection_cost_bps: float = Field(0.0, ge=0, description="Cost used when scoring combos")
    annualisation: int = Field(252, ge=1)


class StrategyConfig(BaseModel):
    kinds: List[StrategyKind] = Field(
        default_factory=lambda: [StrategyKind.MOP, StrategyKind.BAZ, StrategyKind.REV]
    )
    mop_k: List[int] = Field(default_factory=lambda: [5, 21, 63, 126, 252])
    baz_pairs: List[Tuple[int, int]] = Field(default_factory=lambda: [(4, 12), (8, 24), (16, 48), (32, 96)])
    rev_k: List[int] = Field(default_factory=lambda: [1, 5, 10, 21])
    rev_z_upper: List[float] = Field(default_factory=lambda: [1.5, 1.75, 2.0])
    rev_z_lower: List[float] = Field(default_factory=lambda: [0.5, 0.75, 1.0])
    adf_threshold: float = Field(0.01, gt=0, lt=1)
    zscore_span: int = Field(63, ge=2)
    zscore_min_periods: int = Field(10, ge=2)
    macd_vol_span: int = Field(63, ge=2)
    macd_vol_min_periods: int = Field(10, ge=2)
    features: Optional[List[str]] = Field(None, description="Grid features; defaults to the alternative features")

    @field_validator("kinds")
    @classmethod
    def grid_kinds_only(cls, v):
        allowed = {StrategyKind.MOP, StrategyKind.BAZ, StrategyKind.REV}
        if not set(v) <= allowed:
            raise ValueError("strategy kinds must be MOP, BAZ or REV")
        return v


class BacktestConfig(BaseModel):
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    cost_grid: List[float] = Field(default_factory=lambda: [0.0, 2.5, 5.0, 7.5, 10.0, 12.5])
    psr_confidence: float = Field(0.99, gt=0, lt=1)
    benchmark_sharpe: float = Field(0.0, description="Daily benchmark Sharpe ratio for PSR and MTR")


class ResearchConfig(BaseModel):
    """Complete experiment definition; every section has working defaults"""
    calendar: CalendarConfig = Field(default_factory=CalendarConfig)
    universe: UniverseConfig = Field(default_factory=UniverseConfig)
    panel: PanelConfig = Field(default_factory=PanelConfig)
    portfolio: PortfolioConfig = Field(default_factory=PortfolioConfig)
    strategies: StrategyConfig = Field(default_factory=StrategyConfig)
    mfin: MfinConfig = Field(default_factory=MfinConfig)
    search: SearchSpace = Field(default_factory=SearchSpace)
    hyperband: HyperbandConfig = Field(default_factory=HyperbandConfig)
    backtest: BacktestConfig = Field(default_factory=BacktestConfig)

    @property
    def grid_features(self) -> List[str]:
        return self.strategies.features or self.universe.alternative_features

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_toml(cls, path: Union[str, Path]) -> "ResearchConfig":
        """Load and validate a TOML experiment file"""
        path = Path(path)
        try:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}", {"path": str(path)})
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Config file is not valid TOML: {e}", {"path": str(path)})

        try:
            config = cls.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(
                "Invalid configuration",
                {"path": str(path), "errors": [err["msg"] for err in e.errors()]},
            )

        logger.info("Configuration loaded", path=str(path), config_hash=config.config_hash()[:12])
        return config
