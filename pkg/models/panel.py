"""Calendar, raw series and factor panel containers"""

from dataclasses import dataclass, field
from datetime import date
from typing import Dict, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd

from core.exceptions import DataIntegrityError, WindowError
from schemas.config import DataSource

DateLike = Union[str, date, pd.Timestamp]

# Standard deviations at or below this are treated as zero
ZERO_VARIANCE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Calendar:
    """Daily trading calendar; crypto trades every day so there are no gaps"""
    dates: pd.DatetimeIndex

    def __post_init__(self):
        if not isinstance(self.dates, pd.DatetimeIndex):
            object.__setattr__(self, "dates", pd.DatetimeIndex(self.dates))
        if not self.dates.is_unique:
            raise DataIntegrityError("Calendar dates must be unique")
        if not self.dates.is_monotonic_increasing:
            raise DataIntegrityError("Calendar dates must be strictly increasing")

    @classmethod
    def daily(cls, start: DateLike, end: DateLike) -> "Calendar":
        return cls(pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq="D", name="date"))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def start(self) -> pd.Timestamp:
        return self.dates[0]

    @property
    def end(self) -> pd.Timestamp:
        return self.dates[-1]

    def index_of(self, day: DateLike) -> int:
        ts = pd.Timestamp(day)
        try:
            return int(self.dates.get_loc(ts))
        except KeyError:
            raise WindowError(f"Date {ts.date()} is not on the calendar", {"date": str(ts.date())})

    def truncate(self, end: DateLike) -> "Calendar":
        return Calendar(self.dates[self.dates <= pd.Timestamp(end)])


@dataclass(frozen=True, eq=False)
class RawSeries:
    """Observations of one (asset, feature) from one source, in native units"""
    asset: str
    feature: str
    source: DataSource
    observations: pd.Series
    segment: Optional[int] = None

    def __post_init__(self):
        obs = self.observations
        if not isinstance(obs.index, pd.DatetimeIndex):
            raise DataIntegrityError("RawSeries must be indexed by dates", {"asset": self.asset, "feature": self.feature})
        if not obs.index.is_unique or not obs.index.is_monotonic_increasing:
            raise DataIntegrityError(
                "RawSeries dates must be strictly increasing",
                {"asset": self.asset, "feature": self.feature},
            )
        values = obs.to_numpy(dtype=float)
        if np.isinf(values).any():
            raise DataIntegrityError("RawSeries values must be finite", {"asset": self.asset, "feature": self.feature})

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def key(self) -> Tuple[str, str]:
        return (self.asset, self.feature)


@dataclass(frozen=True, eq=False)
class FactorPanel:
    """Date-aligned levels, returns and EW return volatility per (date, asset, feature).

    Arrays have shape (n_dates, n_assets, n_features). Levels are NaN where
    ``mask`` is False. ``std`` is the daily (not annualised) exponentially
    weighted standard deviation of returns using data up to and including
    each date.
    """
    calendar: Calendar
    assets: Tuple[str, ...]
    features: Tuple[str, ...]
    levels: np.ndarray
    mask: np.ndarray
    returns: np.ndarray
    std: np.ndarray
    sources: Dict[str, str] = field(default_factory=dict)
    ew_span: int = 63
    ew_min_periods: int = 10

    def __post_init__(self):
        shape = (len(self.calendar), len(self.assets), len(self.features))
        for name in ("levels", "mask", "returns", "std"):
            if getattr(self, name).shape != shape:
                raise DataIntegrityError(
                    f"Panel array '{name}' has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.calendar.dates

    @property
    def n_dates(self) -> int:
        return len(self.calendar)

    def asset_index(self, asset: str) -> int:
        try:
            return self.assets.index(asset)
        except ValueError:
            raise DataIntegrityError(f"Unknown asset '{asset}'", {"asset": asset})

    def feature_index(self, feature: str) -> int:
        try:
            return self.features.index(feature)
        except ValueError:
            raise DataIntegrityError(f"Unknown feature '{feature}'", {"feature": feature})

    def standardized(self) -> np.ndarray:
        """Returns divided by their EW std; 0 when masked, undefined or zero-variance"""
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.returns / self.std
        valid = np.isfinite(z) & (self.std > ZERO_VARIANCE_TOL)
        return np.where(valid, z, 0.0)

    def level_frame(self, feature: str) -> pd.DataFrame:
        j = self.feature_index(feature)
        return pd.DataFrame(self.levels[:, :, j], index=self.dates, columns=list(self.assets))

    def return_frame(self, feature: str) -> pd.DataFrame:
        j = self.feature_index(feature)
        return pd.DataFrame(self.returns[:, :, j], index=self.dates, columns=list(self.assets))

    def std_frame(self, feature: str) -> pd.DataFrame:
        j = self.feature_index(feature)
        return pd.DataFrame(self.std[:, :, j], index=self.dates, columns=list(self.assets))

    def truncate(self, end: DateLike) -> "FactorPanel":
        """Panel restricted to dates up to and including ``end``"""
        n = int((self.dates <= pd.Timestamp(end)).sum())
        return FactorPanel(
            calendar=Calendar(self.dates[:n]),
            assets=self.assets,
            features=self.features,
            levels=self.levels[:n],
            mask=self.mask[:n],
            returns=self.returns[:n],
            std=self.std[:n],
            sources=dict(self.sources),
            ew_span=self.ew_span,
            ew_min_periods=self.ew_min_periods,
        )

    def select_assets(self, assets: Sequence[str]) -> "FactorPanel":
        idx = [self.asset_index(a) for a in assets]
        return FactorPanel(
            calendar=self.calendar,
            assets=tuple(assets),
            features=self.features,
            levels=self.levels[:, idx],
            mask=self.mask[:, idx],
            returns=self.returns[:, idx],
            std=self.std[:, idx],
            sources=dict(self.sources),
            ew_span=self.ew_span,
            ew_min_periods=self.ew_min_periods,
        )


@dataclass(frozen=True, eq=False)
class ModelInputs:
    """Network tensors indexed by decision date.

    Row r belongs to decision date ``dates[r]`` (t): ``X[r]`` holds the
    standardized returns dated t-1, ``Y2[r]`` the scaling factor
    sigma_tgt / sigma_{i,t} of the price feature and ``Y1[r]`` the price
    return realised from t to t+1 multiplied by ``Y2[r]``.
    """
    X: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    dates: pd.DatetimeIndex
    assets: Tuple[str, ...]
    features: Tuple[str, ...]

    def __post_init__(self):
        n, a, _ = self.X.shape
        if self.Y1.shape != (n, a) or self.Y2.shape != (n, a) or len(self.dates) != n:
            raise DataIntegrityError("ModelInputs arrays are misaligned")

    def __len__(self) -> int:
        return self.X.shape[0]

    def slice(self, start: int, stop: int) -> "ModelInputs":
        return ModelInputs(
            X=self.X[start:stop],
            Y1=self.Y1[start:stop],
            Y2=self.Y2[start:stop],
            dates=self.dates[start:stop],
            assets=self.assets,
            features=self.features,
        )
