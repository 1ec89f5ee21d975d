"""Signal, weight and portfolio return containers"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict
import numpy as np
import pandas as pd

from core.exceptions import DataIntegrityError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SignalSeries:
    """Signal of one (asset, feature) labelled by trade date.

    The value at trade date t is computed from levels dated up to t-1.
    """
    asset: str
    feature: str
    values: pd.Series
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class WeightsMatrix:
    """Position sizes in [-1, 1] per decision date (rows) and asset (columns)"""
    values: pd.DataFrame
    label: str = ""
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        data = self.values.to_numpy(dtype=float)
        if not np.isfinite(data).all():
            raise DataIntegrityError("Weights must be finite", {"label": self.label})
        if np.abs(data).max(initial=0.0) > 1.0 + WEIGHT_TOL:
            raise DataIntegrityError("Weights must lie in [-1, 1]", {"label": self.label})

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.values.index

    @property
    def assets(self):
        return list(self.values.columns)

    def loc(self, start=None, end=None) -> "WeightsMatrix":
        return replace(self, values=self.values.loc[start:end])


@dataclass(frozen=True, eq=False)
class VolEstimate:
    """Annualised ex-ante volatility per date and asset; NaN where undefined"""
    asset_vol: pd.DataFrame
    span: int = 63
    annualisation: int = 252


class Stage:
    ASSET_SCALED = "asset-scaled"
    DOUBLY_SCALED = "doubly-scaled"


@dataclass(frozen=True, eq=False)
class PortfolioSeries:
    """Daily portfolio returns labelled by realisation date.

    ``positions`` holds the volatility-scaled positions w/sigma (times the
    second-layer multiplier once doubly scaled) held over the day that ends
    at each row's date; they were decided on the previous calendar date.
    Returns follow

        gross_t = sigma_tgt / N_A * sum_i P_{i,t} r_{i,t}
        net_t   = gross_t - sigma_tgt / N_A * C * turnover_t
        turnover_t = sum_i |P_{i,t} - P_{i,t-1}|

    with P = 0 before the first row and C in basis points.
    """
    positions: pd.DataFrame
    asset_returns: pd.DataFrame
    gross: pd.Series
    net: pd.Series
    turnover: pd.Series
    scale_factor: pd.Series
    warmup: pd.Series
    cost_bps: float
    sigma_target: float
    stage: str = Stage.ASSET_SCALED
    label: str = ""

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.gross.index

    @property
    def n_assets(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return len(self.gross)

    def frame(self) -> pd.DataFrame:
        """Export layout: date, gross, net, turnover, scale_factor"""
        out = pd.DataFrame(
            {
                "gross": self.gross,
                "net": self.net,
                "turnover": self.turnover,
                "scale_factor": self.scale_factor,
            }
        )
        out.index.name = "date"
        return out

    def relabel(self, label: str) -> "PortfolioSeries":
        return replace(self, label=label)
