"""Signal primitives: k-day returns, EWMA, MACD, EW z-scores and the ADF test"""

from dataclasses import dataclass
import math
import numpy as np
import pandas as pd
import structlog
from statsmodels.tsa.stattools import adfuller

from core.exceptions import InsufficientSampleError
from models.panel import ZERO_VARIANCE_TOL
from models.portfolio import SignalSeries

logger = structlog.get_logger()

ADF_MIN_OBSERVATIONS = 30


def k_day_return(levels: pd.Series, k: int) -> pd.Series:
    """levels[t] / levels[t-k] - 1; NaN for the first k dates and where levels[t-k] is 0"""
    if k < 1:
        raise ValueError("k must be at least 1")
    base = levels.shift(k)
    zero_base = base == 0
    if zero_base.any():
        logger.warning("Zero base level in k-day return", points=int(zero_base.sum()), k=k, name=levels.name)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = levels / base.where(~zero_base) - 1.0
    return out


def ewma(series: pd.Series, timescale: float) -> pd.Series:
    """e_t = (1 - a) e_{t-1} + a x_t with a = 1/timescale, seeded at the first observation"""
    if timescale < 1:
        raise ValueError("timescale must be at least 1")
    if series.empty:
        return series.astype(float)
    return series.ewm(alpha=1.0 / timescale, adjust=False).mean()


def ew_std(series: pd.Series, span: int = 63, min_periods: int = 10) -> pd.Series:
    return series.ewm(span=span, min_periods=min_periods).std()


def macd_values(
    series: pd.Series,
    short: int,
    long: int,
    vol_span: int = 63,
    vol_min_periods: int = 10,
) -> pd.Series:
    """MACD on native dates: (EWMA_S - EWMA_L) / EW std of the series, 0 where that std is 0"""
    if short >= long:
        raise ValueError("short timescale must be below long timescale")
    numerator = ewma(series, short) - ewma(series, long)
    scale = ew_std(series, vol_span, vol_min_periods)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = numerator / scale
    return out.where(~(scale <= ZERO_VARIANCE_TOL), 0.0)


def macd(
    series: pd.Series,
    short: int,
    long: int,
    asset: str = "",
    feature: str = "",
    vol_span: int = 63,
    vol_min_periods: int = 10,
) -> SignalSeries:
    """MACD signal labelled by trade date (computed from levels up to t-1)"""
    values = macd_values(series, short, long, vol_span, vol_min_periods).shift(1)
    return SignalSeries(asset=asset, feature=feature, values=values, params={"short": short, "long": long})


def ew_zscore(spread: pd.Series, span: int = 63, min_periods: int = 10) -> pd.Series:
    """(d_t - EW mean_t) / EW std_t; NaN during warm-up and where the std is 0"""
    mean = spread.ewm(span=span, min_periods=min_periods).mean()
    std = ew_std(spread, span, min_periods)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (spread - mean) / std
    return z.where(std > ZERO_VARIANCE_TOL)


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    pvalue: float
    lags: int
    nobs: int
    degenerate: bool = False


def schwert_lags(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and a fixed Schwert lag order.

    A constant series is reported as p = 0 with ``degenerate`` set.
    """
    values = np.asarray(pd.Series(series).dropna(), dtype=float)
    n = values.size
    if n < ADF_MIN_OBSERVATIONS:
        raise InsufficientSampleError(
            f"ADF test needs at least {ADF_MIN_OBSERVATIONS} observations",
            {"n": int(n)},
        )

    if np.ptp(values) <= ZERO_VARIANCE_TOL:
        logger.warning("ADF on a constant series", n=int(n))
        return AdfResult(statistic=-np.inf, pvalue=0.0, lags=0, nobs=int(n), degenerate=True)

    lags = min(schwert_lags(n), n // 2 - 2)
    try:
        statistic, pvalue, used_lag, nobs, _ = adfuller(values, maxlag=lags, regression="c", autolag=None)
    except np.linalg.LinAlgError as e:
        logger.warning("ADF regression is singular", n=int(n), error=str(e))
        return AdfResult(statistic=-np.inf, pvalue=0.0, lags=lags, nobs=int(n), degenerate=True)

    return AdfResult(statistic=float(statistic), pvalue=float(pvalue), lags=int(used_lag), nobs=int(nobs))


def adf_pvalue(series) -> float:
    return adf_test(series).pvalue
