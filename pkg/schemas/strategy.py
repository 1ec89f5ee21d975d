"""Strategy parameter and selection schemas"""

from typing import Any, Dict, List, Optional, Tuple, Union
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrategyKind(str, Enum):
    MOP = "MOP"
    BAZ = "BAZ"
    REV = "REV"
    CMB = "CMB"
    LONG_ONLY = "Long-only"
    MFIN = "MFIN"


# Kinds that are selected from a feature-parameter grid
GRID_KINDS = (StrategyKind.MOP, StrategyKind.BAZ, StrategyKind.REV)


class MopParams(BaseModel):
    """Time-series momentum over a k-day return"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Return lookback in days")

    def sort_key(self) -> Tuple:
        return (self.k,)

    def label(self) -> str:
        return f"k={self.k}"


class BazParams(BaseModel):
    """MACD crossover timescales"""
    model_config = ConfigDict(frozen=True)

    short: int = Field(..., ge=1, description="Short EWMA timescale S_k in days")
    long: int = Field(..., ge=1, description="Long EWMA timescale L_k in days")

    @model_validator(mode="after")
    def check_order(self):
        if self.short >= self.long:
            raise ValueError("short timescale must be below long timescale")
        return self

    def sort_key(self) -> Tuple:
        return (self.short, self.long)

    def label(self) -> str:
        return f"S={self.short},L={self.long}"


class RevParams(BaseModel):
    """Z-score reversion thresholds"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Return length in days for the spread")
    z_upper: float = Field(..., gt=0, description="Entry threshold z_u")
    z_lower: float = Field(..., ge=0, description="Exit threshold z_l")

    @model_validator(mode="after")
    def check_thresholds(self):
        if self.z_upper <= self.z_lower:
            raise ValueError("z_upper must exceed z_lower")
        return self

    def sort_key(self) -> Tuple:
        return (self.k, self.z_upper, self.z_lower)

    def label(self) -> str:
        return f"k={self.k},zu={self.z_upper},zl={self.z_lower}"


StrategyParams = Union[MopParams, BazParams, RevParams]


class Combo(BaseModel):
    """One feature-parameter combination of a grid strategy"""
    model_config = ConfigDict(frozen=True)

    kind: StrategyKind
    feature: str
    params: StrategyParams
    requires_adf: bool = False

    def sort_key(self) -> Tuple:
        return (self.feature, self.params.sort_key())

    def label(self) -> str:
        return f"{self.kind.value}[{self.feature}; {self.params.label()}]"


class ScoredCombo(BaseModel):
    """Combination with its train-window Sharpe ratio"""
    model_config = ConfigDict(frozen=True)

    combo: Combo
    sharpe: float


class Pick(BaseModel):
    feature: str
    params: Dict[str, Any]
    train_sharpe: float


class ComboSelection(BaseModel):
    """Top-two distinct-feature selection for one strategy kind"""
    kind: StrategyKind
    picks: List[Pick] = Field(..., min_length=1, max_length=2)
    combos: List[Combo] = Field(default_factory=list, exclude=True)
    window: Optional[str] = Field(None, description="Label of the scoring window")
    single_feature: bool = Field(False, description="Grid held a single feature; one pick only")

    @model_validator(mode="after")
    def check_distinct(self):
        features = [p.feature for p in self.picks]
        if len(set(features)) != len(features):
            raise ValueError("picks must use distinct features")
        return self


class SelectionTable(BaseModel):
    """Test window -> picks per strategy kind"""
    rows: List[ComboSelection] = Field(default_factory=list)

    def by_window(self) -> Dict[str, Dict[str, List[Pick]]]:
        table: Dict[str, Dict[str, List[Pick]]] = {}
        for row in self.rows:
            table.setdefault(row.window or "", {})[row.kind.value] = row.picks
        return table
