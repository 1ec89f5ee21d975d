"""Portfolio construction: volatility-targeted, cost-aware returns and seed ensembles"""

from dataclasses import replace
from typing import Optional, Sequence
import math
import numpy as np
import pandas as pd
import structlog

from core.exceptions import AlignmentError, DataIntegrityError
from models.panel import FactorPanel, ZERO_VARIANCE_TOL
from models.portfolio import PortfolioSeries, Stage, VolEstimate, WeightsMatrix

logger = structlog.get_logger()

BPS = 1e-4


def estimate_asset_vol(
    panel: FactorPanel,
    price_feature: str = "open",
    span: int = 63,
    min_periods: int = 10,
    annualisation: int = 252,
) -> VolEstimate:
    """Annualised ex-ante EW volatility of each asset's price returns (data up to t)"""
    returns = panel.return_frame(price_feature)
    vol = returns.ewm(span=span, min_periods=min_periods).std() * math.sqrt(annualisation)
    vol = vol.where(vol > ZERO_VARIANCE_TOL)
    return VolEstimate(asset_vol=vol, span=span, annualisation=annualisation)


def mask_undefined_vol(weights: WeightsMatrix, vol: VolEstimate) -> WeightsMatrix:
    """Zero the weights on dates where an asset's volatility is undefined"""
    sigma = vol.asset_vol.reindex(index=weights.dates, columns=weights.assets)
    defined = sigma.notna() & (sigma > 0)
    return replace(weights, values=weights.values.where(defined, 0.0))


def _series_from_positions(
    positions: pd.DataFrame,
    asset_returns: pd.DataFrame,
    cost_bps: float,
    sigma_target: float,
    scale_factor: pd.Series,
    warmup: pd.Series,
    stage: str,
    label: str,
) -> PortfolioSeries:
    P = positions.to_numpy(dtype=float)
    r = np.nan_to_num(asset_returns.to_numpy(dtype=float), nan=0.0)
    n_assets = P.shape[1]

    turnover = np.abs(np.diff(P, axis=0, prepend=np.zeros((1, n_assets)))).sum(axis=1)
    gross = sigma_target / n_assets * (P * r).sum(axis=1)
    net = gross - sigma_target / n_assets * cost_bps * BPS * turnover

    index = positions.index
    return PortfolioSeries(
        positions=positions,
        asset_returns=asset_returns,
        gross=pd.Series(gross, index=index, name="gross"),
        net=pd.Series(net, index=index, name="net"),
        turnover=pd.Series(turnover, index=index, name="turnover"),
        scale_factor=scale_factor.rename("scale_factor"),
        warmup=warmup.rename("warmup"),
        cost_bps=float(cost_bps),
        sigma_target=sigma_target,
        stage=stage,
        label=label,
    )


def portfolio_from_positions(
    positions: pd.DataFrame,
    asset_returns: pd.DataFrame,
    cost_bps: float = 0.0,
    sigma_target: float = 0.15,
    stage: str = Stage.DOUBLY_SCALED,
    label: str = "",
    scale_factor: Optional[pd.Series] = None,
    warmup: Optional[pd.Series] = None,
) -> PortfolioSeries:
    """Portfolio series for positions already labelled by realisation date"""
    asset_returns = asset_returns.reindex(index=positions.index, columns=positions.columns)
    index = positions.index
    scale_factor = scale_factor if scale_factor is not None else pd.Series(1.0, index=index)
    warmup = warmup if warmup is not None else pd.Series(False, index=index)
    return _series_from_positions(
        positions, asset_returns, cost_bps, sigma_target, scale_factor, warmup, stage, label
    )


def portfolio_returns(
    weights: WeightsMatrix,
    asset_returns: pd.DataFrame,
    vol: VolEstimate,
    cost_bps: float = 0.0,
    sigma_target: float = 0.15,
    label: Optional[str] = None,
) -> PortfolioSeries:
    """Asset-level volatility-scaled returns.

    R_{p,t+1} = sigma_tgt/N_A * sum_i [ (w_{i,t}/sigma_{i,t}) r_{i,t+1}
                                        - C |w_{i,t}/sigma_{i,t} - w_{i,t-1}/sigma_{i,t-1}| ]

    Weight rows are decision dates and must be consecutive calendar dates;
    the result is labelled by the following (realisation) dates. Entering
    from flat is charged on the first row.
    """
    dates = weights.dates
    calendar = asset_returns.index
    pos = calendar.get_indexer(dates)
    if (pos < 0).any():
        raise AlignmentError("Weight dates are not on the return calendar", {"label": weights.label})
    if (pos + 1 >= len(calendar)).any():
        raise AlignmentError("Last decision date has no realised return", {"label": weights.label})
    if len(pos) > 1 and not (np.diff(pos) == 1).all():
        raise AlignmentError("Decision dates must be consecutive", {"label": weights.label})

    sigma = vol.asset_vol.reindex(index=dates, columns=weights.assets).to_numpy(dtype=float)
    w = weights.values.to_numpy(dtype=float)
    undefined = ~np.isfinite(sigma) | (sigma <= 0)
    if (undefined & (w != 0)).any():
        first = int(np.argwhere(undefined & (w != 0))[0][0])
        raise DataIntegrityError(
            "Non-zero weight where asset volatility is undefined",
            {"label": weights.label, "date": str(dates[first].date())},
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(w != 0, w / sigma, 0.0)

    realised = calendar[pos + 1]
    positions = pd.DataFrame(scaled, index=realised, columns=weights.assets)
    returns = asset_returns.iloc[pos + 1].reindex(columns=weights.assets)
    returns.index = realised

    return _series_from_positions(
        positions,
        returns,
        cost_bps,
        sigma_target,
        pd.Series(1.0, index=realised),
        pd.Series(False, index=realised),
        Stage.ASSET_SCALED,
        label if label is not None else weights.label,
    )


def portfolio_multiplier(
    gross: pd.Series,
    sigma_target: float = 0.15,
    span: int = 21,
    min_periods: int = 21,
    annualisation: int = 252,
):
    """sigma_tgt / sigma_t from the EW std of returns strictly before each row.

    Returns (multiplier, warmup flag, degenerate flag); undefined points get 1.
    """
    sigma = gross.ewm(span=span, min_periods=min_periods).std().shift(1) * math.sqrt(annualisation)
    warmup = sigma.isna()
    degenerate = ~warmup & (sigma <= ZERO_VARIANCE_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        multiplier = (sigma_target / sigma).where(~warmup & ~degenerate, 1.0)
    return multiplier, warmup, degenerate


def second_layer_scale(
    series: PortfolioSeries,
    span: int = 21,
    min_periods: int = 21,
    annualisation: int = 252,
) -> PortfolioSeries:
    """Scale a portfolio to the target by its own ex-ante 21-day EW volatility.

    The multiplier uses the gross return stream so it does not depend on the
    cost coefficient; costs are recharged on the doubly-scaled position changes.
    Warm-up and zero-volatility points pass through unscaled and are flagged.
    """
    multiplier, warmup, degenerate = portfolio_multiplier(
        series.gross, series.sigma_target, span, min_periods, annualisation
    )
    if degenerate.any():
        logger.warning("Zero portfolio volatility; points passed through", label=series.label, points=int(degenerate.sum()))

    positions = series.positions.mul(multiplier.to_numpy(), axis=0)
    return _series_from_positions(
        positions,
        series.asset_returns,
        series.cost_bps,
        series.sigma_target,
        multiplier * series.scale_factor,
        warmup | degenerate,
        Stage.DOUBLY_SCALED,
        series.label,
    )


def with_cost(series: PortfolioSeries, cost_bps: float) -> PortfolioSeries:
    """Same positions charged at a different cost coefficient"""
    return _series_from_positions(
        series.positions,
        series.asset_returns,
        cost_bps,
        series.sigma_target,
        series.scale_factor,
        series.warmup,
        series.stage,
        series.label,
    )


def restrict(series: PortfolioSeries, start=None, end=None) -> PortfolioSeries:
    """Sub-period entered from flat, so its first row carries the entry cost"""
    index = series.dates
    keep = np.ones(len(index), dtype=bool)
    if start is not None:
        keep &= index >= pd.Timestamp(start)
    if end is not None:
        keep &= index <= pd.Timestamp(end)
    return _series_from_positions(
        series.positions.loc[keep],
        series.asset_returns.loc[keep],
        series.cost_bps,
        series.sigma_target,
        series.scale_factor.loc[keep],
        series.warmup.loc[keep],
        series.stage,
        series.label,
    )


def concat_series(parts: Sequence[PortfolioSeries], label: Optional[str] = None) -> PortfolioSeries:
    """Chain consecutive out-of-sample pieces; costs are recharged across the joins"""
    if not parts:
        raise AlignmentError("Nothing to concatenate")
    positions = pd.concat([p.positions for p in parts])
    if not positions.index.is_unique or not positions.index.is_monotonic_increasing:
        raise AlignmentError("Portfolio pieces overlap or are out of order")
    first = parts[0]
    return _series_from_positions(
        positions,
        pd.concat([p.asset_returns for p in parts]),
        first.cost_bps,
        first.sigma_target,
        pd.concat([p.scale_factor for p in parts]),
        pd.concat([p.warmup for p in parts]),
        first.stage,
        label if label is not None else first.label,
    )


def combine_portfolios(
    components: Sequence[PortfolioSeries],
    label: str = "CMB",
    rescale: bool = False,
    span: int = 21,
    min_periods: int = 21,
    annualisation: int = 252,
) -> PortfolioSeries:
    """Equal-risk combination of doubly-scaled components.

    Positions are averaged over the dates all components share, so the
    gross combined return is the mean of the component gross returns;
    costs are charged on the averaged position changes.
    """
    if not components:
        raise AlignmentError("No components to combine")
    for c in components:
        if c.stage != Stage.DOUBLY_SCALED:
            logger.warning("Combining a component that is not doubly scaled", component=c.label, stage=c.stage)

    index = components[0].dates
    for c in components[1:]:
        index = index.intersection(c.dates)
    if len(index) == 0:
        raise AlignmentError("Components share no dates", {"components": [c.label for c in components]})

    columns = list(components[0].positions.columns)
    stacked = np.stack(
        [c.positions.reindex(index=index, columns=columns).fillna(0.0).to_numpy() for c in components]
    )
    positions = pd.DataFrame(stacked.mean(axis=0), index=index, columns=columns)
    first = components[0]

    combined = _series_from_positions(
        positions,
        first.asset_returns.reindex(index=index, columns=columns),
        first.cost_bps,
        first.sigma_target,
        pd.Series(1.0, index=index),
        pd.concat([c.warmup.reindex(index).fillna(False) for c in components], axis=1).any(axis=1),
        Stage.DOUBLY_SCALED,
        label,
    )
    if rescale:
        combined = second_layer_scale(combined, span, min_periods, annualisation)
    return combined


def ensemble_average(weight_matrices: Sequence[WeightsMatrix], label: str = "ensemble") -> WeightsMatrix:
    """Arithmetic mean of seed weight matrices per (date, asset)"""
    if not weight_matrices:
        raise AlignmentError("No weight matrices to average")
    first = weight_matrices[0]
    for w in weight_matrices[1:]:
        if not w.values.index.equals(first.values.index) or list(w.values.columns) != list(first.values.columns):
            raise AlignmentError("Seed weight matrices are not aligned")
    stacked = np.stack([w.values.to_numpy(dtype=float) for w in weight_matrices])
    mean = pd.DataFrame(stacked.mean(axis=0), index=first.values.index, columns=first.values.columns)
    return WeightsMatrix(values=mean.clip(-1.0, 1.0), label=label, provenance={"members": len(weight_matrices)})
