"""Performance statistics for daily return series"""

from typing import Dict, Mapping, Optional, Tuple, Union
import math
import numpy as np
import pandas as pd
import structlog
from scipy.stats import kurtosis, norm, pearsonr, skew, spearmanr

from core.exceptions import DegenerateStatisticError, InsufficientSampleError, NumericalError
from models.panel import ZERO_VARIANCE_TOL
from models.portfolio import PortfolioSeries
from schemas.report import MetricsReport

logger = structlog.get_logger()

ANNUALISATION = 252
PSR_MIN_OBSERVATIONS = 30

ReturnsLike = Union[pd.Series, np.ndarray]


def _values(series: ReturnsLike) -> np.ndarray:
    values = np.asarray(series, dtype=float)
    return values[np.isfinite(values)]


def _std(values: np.ndarray) -> float:
    if values.size < 2:
        raise InsufficientSampleError("Need at least two returns", {"n": int(values.size)})
    std = float(np.std(values, ddof=1))
    if std <= ZERO_VARIANCE_TOL:
        raise DegenerateStatisticError("Return series has zero standard deviation", {"n": int(values.size)})
    return std


def sharpe(series: ReturnsLike, annualisation: int = ANNUALISATION) -> float:
    """sqrt(252) * mean / std of daily returns"""
    r = _values(series)
    return math.sqrt(annualisation) * float(r.mean()) / _std(r)


def sortino(series: ReturnsLike, annualisation: int = ANNUALISATION) -> float:
    """sqrt(252) * mean / downside deviation, the downside being min(r, 0)"""
    r = _values(series)
    if r.size < 2:
        raise InsufficientSampleError("Need at least two returns", {"n": int(r.size)})
    downside = math.sqrt(float(np.mean(np.minimum(r, 0.0) ** 2)))
    mean = float(r.mean())
    if downside <= ZERO_VARIANCE_TOL:
        if mean > 0:
            return math.inf
        raise DegenerateStatisticError("No downside and no positive mean", {"n": int(r.size)})
    return math.sqrt(annualisation) * mean / downside


def mar(series: ReturnsLike, annualisation: int = ANNUALISATION) -> float:
    """Annualised arithmetic mean return (fraction)"""
    return float(_values(series).mean()) * annualisation


def vol(series: ReturnsLike, annualisation: int = ANNUALISATION) -> float:
    """Annualised standard deviation (fraction)"""
    r = _values(series)
    if r.size < 2:
        raise InsufficientSampleError("Need at least two returns", {"n": int(r.size)})
    return float(np.std(r, ddof=1)) * math.sqrt(annualisation)


def equity_curve(series: ReturnsLike) -> np.ndarray:
    return np.cumprod(1.0 + np.nan_to_num(np.asarray(series, dtype=float), nan=0.0))


def mdd(series: ReturnsLike, annualisation: int = ANNUALISATION) -> Tuple[float, float]:
    """Maximum drawdown of the compounded equity curve (fraction) and in units of VOL"""
    equity = equity_curve(series)
    if equity.size == 0:
        return 0.0, 0.0
    peak = np.maximum.accumulate(np.maximum(equity, 1.0))
    drawdown = float(np.max(1.0 - equity / peak))
    drawdown = min(max(drawdown, 0.0), 1.0)
    v = vol(series, annualisation)
    sigma_mult = drawdown / v if v > ZERO_VARIANCE_TOL else math.nan
    return drawdown, sigma_mult


def calmar(series: ReturnsLike, annualisation: int = ANNUALISATION) -> float:
    """MAR / MDD; infinite when there is no drawdown"""
    drawdown, _ = mdd(series, annualisation)
    annual = mar(series, annualisation)
    if drawdown <= 0:
        return math.inf if annual > 0 else (0.0 if annual == 0 else -math.inf)
    return annual / drawdown


def hit_rate(series: ReturnsLike) -> float:
    """Fraction of days with a positive return"""
    r = _values(series)
    if r.size == 0:
        raise InsufficientSampleError("Empty return series")
    return float(np.mean(r > 0))


def pnl_ratio(series: ReturnsLike) -> float:
    """Average gain over the magnitude of the average loss; infinite without losses"""
    r = _values(series)
    gains = r[r > 0]
    losses = r[r < 0]
    if losses.size == 0:
        return math.inf if gains.size else math.nan
    if gains.size == 0:
        return 0.0
    return float(gains.mean()) / abs(float(losses.mean()))


def correlation(series_a: ReturnsLike, series_b: ReturnsLike) -> Tuple[float, float]:
    """(Pearson, Spearman) over dates where both are finite"""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape:
        raise NumericalError("Correlation inputs differ in length", {"a": a.shape, "b": b.shape})
    both = np.isfinite(a) & np.isfinite(b)
    a, b = a[both], b[both]
    if a.size < 3 or np.std(a) <= ZERO_VARIANCE_TOL or np.std(b) <= ZERO_VARIANCE_TOL:
        raise DegenerateStatisticError("Correlation undefined for constant or short series", {"n": int(a.size)})
    return float(pearsonr(a, b)[0]), float(spearmanr(a, b)[0])


def breakeven_cost(positions: pd.DataFrame, asset_returns: pd.DataFrame) -> float:
    """Breakeven cost in bps: sum of position PnL over total position change.

    Positions are the fully scaled positions labelled by realisation date,
    entered from flat.
    """
    P = positions.to_numpy(dtype=float)
    r = np.nan_to_num(asset_returns.reindex(index=positions.index, columns=positions.columns).to_numpy(dtype=float))
    profit = float((P * r).sum())
    turnover = float(np.abs(np.diff(P, axis=0, prepend=np.zeros((1, P.shape[1])))).sum())
    if turnover <= 0:
        if profit == 0:
            return math.nan
        return math.copysign(math.inf, profit)
    return profit / turnover * 1e4


def series_breakeven(series: PortfolioSeries) -> float:
    return breakeven_cost(series.positions, series.asset_returns)


def _moments(r: np.ndarray) -> Tuple[float, float, float]:
    sr = float(r.mean()) / _std(r)
    g3 = float(skew(r))
    g4 = float(kurtosis(r, fisher=False))
    if not (math.isfinite(g3) and math.isfinite(g4)):
        raise NumericalError("Non-finite skewness or kurtosis", {"skew": g3, "kurtosis": g4})
    return sr, g3, g4


def psr_from_moments(sr: float, g3: float, g4: float, n: int, benchmark_sr: float = 0.0) -> float:
    denominator = 1.0 - g3 * sr + (g4 - 1.0) / 4.0 * sr ** 2
    if denominator <= 0:
        raise NumericalError("PSR variance term is not positive", {"sr": sr, "skew": g3, "kurtosis": g4})
    return float(norm.cdf((sr - benchmark_sr) * math.sqrt(n - 1) / math.sqrt(denominator)))


def psr(series: ReturnsLike, benchmark_sr: float = 0.0) -> float:
    """Probabilistic Sharpe ratio against a daily benchmark Sharpe ratio"""
    r = _values(series)
    if r.size < PSR_MIN_OBSERVATIONS:
        raise InsufficientSampleError(f"PSR needs at least {PSR_MIN_OBSERVATIONS} returns", {"n": int(r.size)})
    sr, g3, g4 = _moments(r)
    return psr_from_moments(sr, g3, g4, r.size, benchmark_sr)


def mtr_from_moments(sr: float, g3: float, g4: float, benchmark_sr: float = 0.0, confidence: float = 0.99) -> float:
    if sr <= benchmark_sr:
        return math.inf
    denominator = 1.0 - g3 * sr + (g4 - 1.0) / 4.0 * sr ** 2
    z = float(norm.ppf(confidence))
    n = 1.0 + denominator * (z / (sr - benchmark_sr)) ** 2
    candidate = max(int(math.ceil(n)), 2)
    # ceil can land one off at exact boundaries
    while candidate > 2 and psr_from_moments(sr, g3, g4, candidate - 1, benchmark_sr) >= confidence:
        candidate -= 1
    while psr_from_moments(sr, g3, g4, candidate, benchmark_sr) < confidence:
        candidate += 1
    return float(candidate)


def mtr(series: ReturnsLike, benchmark_sr: float = 0.0, confidence: float = 0.99) -> float:
    """Minimum track record: smallest n whose PSR reaches ``confidence``; infinite if SR <= benchmark"""
    r = _values(series)
    if r.size < PSR_MIN_OBSERVATIONS:
        raise InsufficientSampleError(f"MTR needs at least {PSR_MIN_OBSERVATIONS} returns", {"n": int(r.size)})
    sr, g3, g4 = _moments(r)
    return mtr_from_moments(sr, g3, g4, benchmark_sr, confidence)


def _guarded(flags, name, fn, *args, **kwargs) -> float:
    try:
        value = fn(*args, **kwargs)
    except (DegenerateStatisticError, InsufficientSampleError, NumericalError) as e:
        flags.append(f"{name}: {e.message}")
        return math.nan
    if isinstance(value, float) and math.isinf(value):
        flags.append(f"{name}: infinite")
    return value


def metrics_report(
    series: Union[PortfolioSeries, pd.Series],
    benchmark: Optional[pd.Series] = None,
    label: Optional[str] = None,
    benchmark_sr: float = 0.0,
    confidence: float = 0.99,
    annualisation: int = ANNUALISATION,
) -> MetricsReport:
    """Every statistic for one series; net returns are used for portfolios"""
    flags = []
    brk = None
    if isinstance(series, PortfolioSeries):
        label = label or series.label
        returns = series.net
        brk = _guarded(flags, "BRK", series_breakeven, series)
    else:
        returns = series
        label = label or str(series.name or "series")

    drawdown = _guarded(flags, "MDD", mdd, returns, annualisation)
    if isinstance(drawdown, float):
        drawdown = (math.nan, math.nan)
    mdd_pct, mdd_sigma = drawdown

    corr_p = corr_s = None
    if benchmark is not None:
        aligned = benchmark.reindex(pd.Index(returns.index))
        pair = _guarded(flags, "CORR", correlation, returns.to_numpy(), aligned.to_numpy())
        if isinstance(pair, tuple):
            corr_p, corr_s = 100 * pair[0], 100 * pair[1]

    report = MetricsReport(
        label=label,
        n_days=int(np.isfinite(np.asarray(returns, dtype=float)).sum()),
        MAR=100 * mar(returns, annualisation),
        VOL=100 * _guarded(flags, "VOL", vol, returns, annualisation),
        MDD=100 * mdd_pct,
        MDD_sigma=mdd_sigma,
        Sharpe=_guarded(flags, "Sharpe", sharpe, returns, annualisation),
        Sortino=_guarded(flags, "Sortino", sortino, returns, annualisation),
        Calmar=_guarded(flags, "Calmar", calmar, returns, annualisation),
        HR=100 * _guarded(flags, "HR", hit_rate, returns),
        PNL=_guarded(flags, "PNL", pnl_ratio, returns),
        CORR=corr_p,
        CORR_spearman=corr_s,
        BRK=brk,
        PSR=100 * _guarded(flags, "PSR", psr, returns, benchmark_sr),
        MTR=_guarded(flags, "MTR", mtr, returns, benchmark_sr, confidence),
        flags=flags,
    )
    if flags:
        logger.info("Metrics flagged", label=label, flags=flags)
    return report


def correlation_matrix(series: Mapping[str, pd.Series]) -> pd.DataFrame:
    """Pearson above the diagonal, Spearman below, 1 on the diagonal"""
    names = list(series)
    frame = pd.DataFrame(series).dropna()
    matrix = pd.DataFrame(np.eye(len(names)), index=names, columns=names)
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            b = names[j]
            try:
                pearson, spearman = correlation(frame[a].to_numpy(), frame[b].to_numpy())
            except DegenerateStatisticError:
                pearson = spearman = math.nan
            matrix.iloc[i, j] = pearson
            matrix.iloc[j, i] = spearman
    return matrix


def summarize(reports: Mapping[str, MetricsReport]) -> Dict[str, Dict[str, Optional[float]]]:
    return {name: report.row() for name, report in reports.items()}
