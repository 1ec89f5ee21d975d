"""Report and manifest schemas"""

from datetime import date, timedelta
from typing import Dict, List, Optional, Tuple
from pydantic import BaseModel, Field


# Column order of the realistic performance table
METRICS_COLUMNS = [
    "MAR",
    "HR",
    "PNL",
    "Sharpe",
    "Sortino",
    "Calmar",
    "VOL",
    "MDD_sigma",
    "CORR",
    "BRK",
    "PSR",
    "MTR",
]

# Column order of the exploration table
EXPLORATION_COLUMNS = [
    "strategy",
    "feature",
    "params",
    "Sharpe",
    "Sortino",
    "Calmar",
    "VOL",
    "MDD_sigma",
    "CORR",
    "BRK",
]


class MetricsReport(BaseModel):
    """Performance statistics of one daily return series.

    Percent-valued fields (MAR, VOL, MDD, HR, CORR, PSR) are stored in percent.
    Undefined statistics are reported as NaN or infinity and named in ``flags``.
    """
    label: str
    n_days: int
    MAR: float = Field(..., description="Annualised arithmetic mean return, %")
    VOL: float = Field(..., description="Annualised volatility, %")
    MDD: float = Field(..., description="Maximum drawdown of compounded equity, %")
    MDD_sigma: float = Field(..., description="Maximum drawdown in units of annualised volatility")
    Sharpe: float
    Sortino: float
    Calmar: float
    HR: float = Field(..., description="Hit rate, %")
    PNL: float = Field(..., description="Average gain over average loss")
    CORR: Optional[float] = Field(None, description="Pearson correlation to the benchmark, %")
    CORR_spearman: Optional[float] = Field(None, description="Spearman correlation to the benchmark, %")
    BRK: Optional[float] = Field(None, description="Breakeven cost, bps")
    PSR: Optional[float] = Field(None, description="Probabilistic Sharpe ratio, %")
    MTR: Optional[float] = Field(None, description="Minimum track record, days")
    flags: List[str] = Field(default_factory=list)

    def row(self) -> Dict[str, Optional[float]]:
        return {column: getattr(self, column) for column in METRICS_COLUMNS}


class SplitSpan(BaseModel):
    start: date
    end: date

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def label(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


class Split(BaseModel):
    index: int
    train: SplitSpan
    valid: SplitSpan
    test: SplitSpan
    truncated: bool = False

    @property
    def fit(self) -> SplitSpan:
        """Training span without its validation tail"""
        return SplitSpan(start=self.train.start, end=self.valid.start - timedelta(days=1))


class SplitPlan(BaseModel):
    splits: List[Split]

    @property
    def test_days(self) -> int:
        return sum(s.test.n_days for s in self.splits)


class AvailabilitySpan(BaseModel):
    asset: str
    feature: str
    first: Optional[date] = None
    last: Optional[date] = None


class PanelManifest(BaseModel):
    assets: List[str]
    features: List[str]
    sources: Dict[str, str] = Field(default_factory=dict)
    calendar_start: date
    calendar_end: date
    ew_span: int
    ew_min_periods: int
    availability: List[AvailabilitySpan] = Field(default_factory=list)
    snapshot_hash: str = ""


class TensorRecord(BaseModel):
    shape: List[int]
    values: List[float]


class CheckpointManifest(BaseModel):
    config: Dict
    seed: int
    n_assets: int
    n_inputs: int
    split: Optional[int] = None
    best_epoch: Optional[int] = None
    best_valid_loss: Optional[float] = None
    tensors: Dict[str, TensorRecord]


class RunManifest(BaseModel):
    config_hash: str
    data_snapshot_hash: str
    seeds: List[int]
    strategies: List[str]
    cost_grid: List[float]
    splits: List[Tuple[str, str]] = Field(default_factory=list)
    version: str = ""
