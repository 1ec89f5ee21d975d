"""Rule-based strategies: weights, grids and top-two selection"""

from itertools import product
from typing import Iterable, List, Optional, Sequence
import math
import numpy as np
import pandas as pd
import structlog

from core.exceptions import ConfigurationError, SelectionError
from models.panel import FactorPanel
from models.portfolio import PortfolioSeries, WeightsMatrix
from schemas.config import StrategyConfig
from schemas.strategy import (
    BazParams,
    Combo,
    ComboSelection,
    MopParams,
    Pick,
    RevParams,
    ScoredCombo,
    StrategyKind,
)
from services.portfolio import combine_portfolios
from services.signals import ew_zscore, k_day_return, macd

logger = structlog.get_logger()


def _sign_weights(signal: pd.DataFrame) -> pd.DataFrame:
    """sign(signal) with sign(0) = 0 and masked signals flat"""
    return np.sign(signal).fillna(0.0)


def mop_weights(panel: FactorPanel, feature: str, params: MopParams) -> WeightsMatrix:
    """w_{i,t} = sign of the k-day feature return dated t-1"""
    levels = panel.level_frame(feature)
    signal = levels.apply(lambda col: k_day_return(col, params.k)).shift(1)
    return WeightsMatrix(
        values=_sign_weights(signal),
        label=StrategyKind.MOP.value,
        provenance={"feature": feature, "params": params.model_dump()},
    )


def baz_weights(
    panel: FactorPanel,
    feature: str,
    params: BazParams,
    vol_span: int = 63,
    vol_min_periods: int = 10,
) -> WeightsMatrix:
    """w_{i,t} = sign of the MACD of the feature dated t-1"""
    levels = panel.level_frame(feature)
    signal = pd.DataFrame(
        {
            asset: macd(levels[asset], params.short, params.long, asset, feature, vol_span, vol_min_periods).values
            for asset in levels.columns
        },
        index=levels.index,
    )
    return WeightsMatrix(
        values=_sign_weights(signal),
        label=StrategyKind.BAZ.value,
        provenance={"feature": feature, "params": params.model_dump()},
    )


def spread_frame(panel: FactorPanel, feature: str, k: int, price_feature: str = "open") -> pd.DataFrame:
    """delta_t = r_price^(k)_t - r_feature^(k)_t per asset, on native dates"""
    price = panel.level_frame(price_feature)
    other = panel.level_frame(feature)
    return pd.DataFrame(
        {asset: k_day_return(price[asset], k) - k_day_return(other[asset], k) for asset in panel.assets},
        index=panel.dates,
    )


def rev_state_machine(z: np.ndarray, z_upper: float, z_lower: float) -> np.ndarray:
    """Enter -sign(z) from flat when |z| >= z_upper, hold while |z| >= z_lower, else exit.

    ``z`` is aligned with the output (already lagged); NaN forces an exit.
    """
    w = np.zeros(len(z))
    prev = 0.0
    for t, value in enumerate(z):
        if not np.isfinite(value):
            current = 0.0
        elif prev == 0.0:
            current = -float(np.sign(value)) if abs(value) >= z_upper else 0.0
        else:
            current = prev if abs(value) >= z_lower else 0.0
        w[t] = current
        prev = current
    return w


def rev_weights(
    panel: FactorPanel,
    feature: str,
    params: RevParams,
    eligible: Optional[Iterable[str]] = None,
    spreads: Optional[pd.DataFrame] = None,
    price_feature: str = "open",
    zscore_span: int = 63,
    zscore_min_periods: int = 10,
) -> WeightsMatrix:
    """Z-score reversion on the price-feature return spread; weights use z dated t-1.

    Assets outside ``eligible`` (those failing the stationarity filter) are held flat.
    """
    if spreads is None:
        spreads = spread_frame(panel, feature, params.k, price_feature)
    eligible = set(panel.assets if eligible is None else eligible)

    values = pd.DataFrame(0.0, index=panel.dates, columns=list(panel.assets))
    for asset in panel.assets:
        if asset not in eligible:
            continue
        z = ew_zscore(spreads[asset], zscore_span, zscore_min_periods).shift(1)
        values[asset] = rev_state_machine(z.to_numpy(), params.z_upper, params.z_lower)

    return WeightsMatrix(
        values=values,
        label=StrategyKind.REV.value,
        provenance={"feature": feature, "params": params.model_dump(), "eligible": sorted(eligible)},
    )


def long_only_weights(panel: FactorPanel) -> WeightsMatrix:
    """Equal unit weight in every asset, masks ignored"""
    return WeightsMatrix(
        values=pd.DataFrame(1.0, index=panel.dates, columns=list(panel.assets)),
        label=StrategyKind.LONG_ONLY.value,
    )


def combo_weights(panel: FactorPanel, combo: Combo, config: Optional[StrategyConfig] = None, **kwargs) -> WeightsMatrix:
    """Weights of one grid combination"""
    config = config or StrategyConfig()
    if combo.kind == StrategyKind.MOP:
        return mop_weights(panel, combo.feature, combo.params)
    if combo.kind == StrategyKind.BAZ:
        return baz_weights(panel, combo.feature, combo.params, config.macd_vol_span, config.macd_vol_min_periods)
    if combo.kind == StrategyKind.REV:
        return rev_weights(
            panel,
            combo.feature,
            combo.params,
            zscore_span=config.zscore_span,
            zscore_min_periods=config.zscore_min_periods,
            **kwargs,
        )
    raise ConfigurationError(f"Strategy kind {combo.kind.value} has no parameter grid")


def enumerate_grid(
    kind: StrategyKind,
    features: Sequence[str],
    config: Optional[StrategyConfig] = None,
) -> List[Combo]:
    """Full Cartesian product of features and the kind's parameter grid"""
    config = config or StrategyConfig()
    kind = StrategyKind(kind)

    if kind == StrategyKind.MOP:
        params = [MopParams(k=k) for k in config.mop_k]
    elif kind == StrategyKind.BAZ:
        params = [BazParams(short=s, long=l) for s, l in config.baz_pairs]
    elif kind == StrategyKind.REV:
        params = [
            RevParams(k=k, z_upper=zu, z_lower=zl)
            for k, zu, zl in product(config.rev_k, config.rev_z_upper, config.rev_z_lower)
            if zu > zl
        ]
    else:
        raise ConfigurationError(f"Strategy kind {kind.value} has no parameter grid")

    requires_adf = kind == StrategyKind.REV
    return [Combo(kind=kind, feature=f, params=p, requires_adf=requires_adf) for f in features for p in params]


def select_top2(
    scored: Iterable[ScoredCombo],
    window: Optional[str] = None,
    allow_single: bool = False,
) -> ComboSelection:
    """Best combo, then the best combo on a different feature.

    Ties are broken by (feature, params) in lexicographic order; NaN scores
    are not eligible. With ``allow_single`` a grid holding one feature yields
    a one-pick selection instead of an error.
    """
    candidates = [s for s in scored if s.sharpe is not None and math.isfinite(s.sharpe)]
    if not candidates:
        raise SelectionError("No combination has a finite training Sharpe ratio", {"window": window})

    ranked = sorted(candidates, key=lambda s: (-s.sharpe, s.combo.sort_key()))
    best = ranked[0]
    second = next((s for s in ranked[1:] if s.combo.feature != best.combo.feature), None)

    kind = best.combo.kind
    if second is None:
        if not allow_single:
            raise SelectionError(
                "Top-two selection needs combinations on two distinct features",
                {"kind": kind.value, "feature": best.combo.feature, "window": window},
            )
        chosen = [best]
    else:
        chosen = [best, second]

    selection = ComboSelection(
        kind=kind,
        picks=[
            Pick(feature=s.combo.feature, params=s.combo.params.model_dump(), train_sharpe=s.sharpe)
            for s in chosen
        ],
        combos=[s.combo for s in chosen],
        window=window,
        single_feature=second is None,
    )
    logger.info(
        "Combinations selected",
        kind=kind.value,
        window=window,
        picks=[s.combo.label() for s in chosen],
        sharpe=[round(s.sharpe, 4) for s in chosen],
    )
    return selection


def cmb_weights(components: Sequence[PortfolioSeries], label: str = "CMB", rescale: bool = False) -> PortfolioSeries:
    """CMB: equal-risk combination of doubly-scaled strategy portfolios.

    Works at position level, so a CMB + MFIN combination is built the same way.
    """
    combined = combine_portfolios(components, label=label, rescale=rescale)
    logger.info("Portfolios combined", label=label, components=[c.label for c in components], days=len(combined))
    return combined
