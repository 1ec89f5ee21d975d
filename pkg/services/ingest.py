"""Ingestion service: CSV snapshots -> linked series -> factor panel -> model inputs"""

from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import math
import numpy as np
import pandas as pd
import structlog

from core.exceptions import (
    AlignmentError,
    ConfigurationError,
    DataIntegrityError,
    DegenerateScaleError,
    DuplicateDateError,
    ParseError,
    WindowError,
)
from models.panel import Calendar, FactorPanel, ModelInputs, RawSeries, ZERO_VARIANCE_TOL
from schemas.config import DataSource, MissingDataPolicy, ResearchConfig, SOURCE_PRIORITY

logger = structlog.get_logger()

PathLike = Union[str, Path]


def _split_stem(path: Path) -> Tuple[str, Optional[str], Optional[int]]:
    """``<asset>[__<feature>[__<segment>]]`` -> (asset, feature, segment)"""
    parts = path.stem.split("__")
    asset = parts[0]
    feature = parts[1] if len(parts) > 1 else None
    segment = None
    if len(parts) > 2:
        try:
            segment = int(parts[2])
        except ValueError:
            raise ParseError(f"Segment number '{parts[2]}' in {path.name} is not an integer", details={"path": str(path)})
    return asset, feature, segment


def load_csv(path: PathLike, source: Union[str, DataSource]) -> List[RawSeries]:
    """Parse one CSV snapshot into a RawSeries per value column.

    Wide files ``<asset>.csv`` carry ``date,<feature>...``; narrow files
    ``<asset>__<feature>[__<segment>].csv`` carry ``date,value``. Empty
    cells are missing observations.
    """
    path = Path(path)
    source = DataSource(source)
    if not path.is_file():
        raise DataIntegrityError(f"Input file not found: {path}", {"path": str(path)})

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"Unreadable CSV {path.name}: {e}", details={"path": str(path)})

    if len(frame.columns) < 2 or frame.columns[0].strip().lower() != "date":
        raise ParseError(f"{path.name}: header must be 'date' followed by value columns", details={"path": str(path)})

    asset, stem_feature, segment = _split_stem(path)
    raw_dates = frame.iloc[:, 0].str.strip()
    dates = pd.to_datetime(raw_dates, format="%Y-%m-%d", errors="coerce")

    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        row = int(bad[0])
        raise ParseError(
            f"{path.name}: malformed date '{raw_dates.iloc[row]}' at row {row}",
            row=row,
            details={"path": str(path)},
        )

    duplicated = np.flatnonzero(dates.duplicated().to_numpy())
    if duplicated.size:
        row = int(duplicated[0])
        raise DuplicateDateError(
            f"{path.name}: duplicate date {raw_dates.iloc[row]} at row {row}",
            {"path": str(path), "row": row, "date": raw_dates.iloc[row]},
        )

    index = pd.DatetimeIndex(dates, name="date")
    series = []
    for column in frame.columns[1:]:
        if column.strip().lower() == "value":
            if stem_feature is None:
                raise ParseError(f"{path.name}: 'value' column needs a file named <asset>__<feature>.csv")
            feature = stem_feature
        else:
            feature = column.strip()

        cells = frame[column].str.strip()
        present = (cells != "").to_numpy()
        numbers = pd.to_numeric(cells.mask(~present), errors="coerce").to_numpy(dtype=float)

        invalid = np.flatnonzero(present & ~np.isfinite(numbers))
        if invalid.size:
            row = int(invalid[0])
            raise ParseError(
                f"{path.name}: malformed number '{cells.iloc[row]}' in column '{column}' at row {row}",
                row=row,
                details={"path": str(path), "column": column},
            )

        observations = pd.Series(numbers, index=index, name=feature).sort_index()
        series.append(RawSeries(asset=asset, feature=feature, source=source, observations=observations, segment=segment))

    logger.debug("CSV loaded", path=str(path), source=source.value, columns=len(series), rows=len(frame))
    return series


def link_segments(segments: Sequence[RawSeries]) -> RawSeries:
    """Backwards proportional adjustment of overlapping segments.

    Consecutive segments share exactly one roll date. Older data is multiplied
    by g2/g1 (first datum of the newer segment over last datum of the older
    one), cumulatively from the newest segment backwards; the newest segment
    is unchanged and the roll-date value comes from the newer segment.
    """
    if not segments:
        raise AlignmentError("No segments to link")
    keys = {s.key for s in segments}
    if len(keys) != 1:
        raise AlignmentError("Segments belong to different (asset, feature) pairs", {"keys": sorted(keys)})

    ordered = sorted(
        segments,
        key=lambda s: (s.observations.dropna().index.min(), s.segment if s.segment is not None else -1),
    )
    if len(ordered) == 1:
        return ordered[0]

    cleaned = [s.observations.dropna() for s in ordered]
    scales = [1.0] * len(ordered)
    rolls: List[pd.Timestamp] = []

    for k in range(len(ordered) - 2, -1, -1):
        older, newer = cleaned[k], cleaned[k + 1]
        overlap = older.index.intersection(newer.index)
        if len(overlap) != 1 or overlap[0] != older.index[-1] or overlap[0] != newer.index[0]:
            raise AlignmentError(
                "Consecutive segments must overlap on exactly one roll date",
                {"asset": ordered[k].asset, "feature": ordered[k].feature, "overlap_days": len(overlap)},
            )
        roll = overlap[0]
        g1 = float(older[roll])
        g2 = float(newer[roll])
        if g1 <= 0:
            raise DegenerateScaleError(
                f"Cannot link segments: last datum of the older segment is {g1}",
                {"asset": ordered[k].asset, "feature": ordered[k].feature, "roll_date": str(roll.date())},
            )
        if g2 < 0:
            raise DegenerateScaleError(f"Negative first datum {g2} in newer segment", {"roll_date": str(roll.date())})
        scales[k] = scales[k + 1] * (g2 / g1)
        rolls.insert(0, roll)

    pieces = []
    for k, obs in enumerate(cleaned):
        scaled = obs if scales[k] == 1.0 else obs * scales[k]
        if k < len(cleaned) - 1:
            scaled = scaled[scaled.index < rolls[k]]
        pieces.append(scaled)

    linked = pd.concat(pieces).sort_index()
    linked.index.name = "date"
    newest = ordered[-1]

    logger.info("Segments linked", asset=newest.asset, feature=newest.feature, segments=len(ordered))
    return RawSeries(asset=newest.asset, feature=newest.feature, source=newest.source, observations=linked)


def _series_sort_key(s: RawSeries):
    first = s.observations.dropna().index.min() if len(s) else pd.Timestamp.max
    return (s.asset, s.feature, SOURCE_PRIORITY[s.source], first, s.segment if s.segment is not None else -1)


def assemble_panel(
    calendar: Calendar,
    assets: Sequence[str],
    features: Sequence[str],
    levels: np.ndarray,
    sources: Optional[Dict[str, str]] = None,
    ew_span: int = 63,
    ew_min_periods: int = 10,
) -> FactorPanel:
    """Derive mask, returns and EW std from aligned levels"""
    n, a, i = levels.shape
    mask = np.isfinite(levels)

    frame = pd.DataFrame(levels.reshape(n, a * i), index=calendar.dates)
    returns = frame.pct_change(fill_method=None).replace([np.inf, -np.inf], np.nan)
    std = returns.ewm(span=ew_span, min_periods=ew_min_periods).std()

    return FactorPanel(
        calendar=calendar,
        assets=tuple(assets),
        features=tuple(features),
        levels=np.where(mask, levels, np.nan),
        mask=mask,
        returns=returns.to_numpy().reshape(n, a, i),
        std=std.to_numpy().reshape(n, a, i),
        sources=dict(sources or {}),
        ew_span=ew_span,
        ew_min_periods=ew_min_periods,
    )


def build_panel(
    series: Iterable[RawSeries],
    calendar: Calendar,
    policy: Optional[MissingDataPolicy] = None,
    assets: Optional[Sequence[str]] = None,
    features: Optional[Sequence[str]] = None,
    ew_span: int = 63,
    ew_min_periods: int = 10,
) -> FactorPanel:
    """Align raw series on the calendar and compute returns and EW std.

    When a pair comes from several sources the higher-priority source wins
    and the others fill its gaps. Interior gaps are forward-filled after
    first availability; leading unavailability stays masked.
    """
    policy = policy or MissingDataPolicy()
    ordered = sorted(series, key=_series_sort_key)

    groups: Dict[Tuple[str, str], List[RawSeries]] = defaultdict(list)
    for s in ordered:
        groups[s.key].append(s)

    assets = tuple(assets) if assets is not None else tuple(sorted({s.asset for s in ordered}))
    features = tuple(features) if features is not None else tuple(sorted({s.feature for s in ordered}))
    if not assets or not features:
        raise ConfigurationError("Panel needs at least one asset and one feature")

    levels = np.full((len(calendar), len(assets), len(features)), np.nan)
    sources: Dict[str, str] = {}
    neutral_filled = []

    for ai, asset in enumerate(assets):
        for fi, feature in enumerate(features):
            group = groups.get((asset, feature))
            if not group:
                if policy.neutral_fill:
                    neutral_filled.append(f"{asset}/{feature}")
                    continue
                raise ConfigurationError(
                    f"Feature '{feature}' is missing for asset '{asset}'",
                    {"asset": asset, "feature": feature},
                )

            combined = None
            for s in group:
                aligned = s.observations.reindex(calendar.dates)
                if combined is None:
                    combined = aligned
                    continue
                both = combined.notna() & aligned.notna()
                disagree = int((~np.isclose(combined[both], aligned[both], rtol=1e-9)).sum())
                if disagree:
                    logger.info(
                        "Sources disagree",
                        asset=asset,
                        feature=feature,
                        fallback=s.source.value,
                        days=disagree,
                    )
                combined = combined.combine_first(aligned)

            if policy.forward_fill:
                combined = combined.ffill()

            levels[:, ai, fi] = combined.to_numpy(dtype=float)
            sources.setdefault(feature, group[0].source.value)

    if neutral_filled:
        logger.warning("Pairs absent and fully masked", pairs=neutral_filled)

    panel = assemble_panel(calendar, assets, features, levels, sources, ew_span, ew_min_periods)
    logger.info(
        "Panel built",
        assets=len(assets),
        features=len(features),
        dates=len(calendar),
        coverage=round(float(panel.mask.mean()), 4),
    )
    return panel


def sequence_inputs(
    panel: FactorPanel,
    first: int,
    last: int,
    sigma_target: float = 0.15,
    price_feature: str = "open",
    annualisation: int = 252,
) -> ModelInputs:
    """Model tensors for decision-date rows ``first..last`` (calendar positions)"""
    n = panel.n_dates
    if first < 1 or last > n - 2 or first > last:
        raise WindowError(
            "Decision rows need one prior day and one realised day",
            {"first": first, "last": last, "n_dates": n},
        )

    j = panel.feature_index(price_feature)
    z = panel.standardized()
    X = z[first - 1:last]

    sigma = panel.std[first:last + 1, :, j] * math.sqrt(annualisation)
    defined = np.isfinite(sigma) & (sigma > ZERO_VARIANCE_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        Y2 = np.where(defined, sigma_target / sigma, 0.0)

    r_next = np.nan_to_num(panel.returns[first + 1:last + 2, :, j], nan=0.0)
    Y1 = r_next * Y2

    return ModelInputs(
        X=X,
        Y1=Y1,
        Y2=Y2,
        dates=panel.dates[first:last + 1],
        assets=panel.assets,
        features=panel.features,
    )


def make_model_inputs(
    panel: FactorPanel,
    window_end,
    T: int,
    sigma_target: float = 0.15,
    price_feature: str = "open",
    annualisation: int = 252,
) -> ModelInputs:
    """T-row window of model tensors ending at decision date ``window_end``"""
    end = panel.calendar.index_of(window_end)
    if end < T + 2:
        raise WindowError(
            f"Window ending {pd.Timestamp(window_end).date()} needs {T + 2} days of history",
            {"T": T, "available": end},
        )
    if end > panel.n_dates - 2:
        raise WindowError("Window end has no realised next-day return", {"window_end": str(window_end)})
    return sequence_inputs(panel, end - T + 1, end, sigma_target, price_feature, annualisation)


def span_inputs(
    panel: FactorPanel,
    start,
    end,
    sigma_target: float = 0.15,
    price_feature: str = "open",
    annualisation: int = 252,
) -> ModelInputs:
    """Model tensors for every decision date in [start, end] that has a prior and a realised day"""
    dates = panel.dates
    first = max(int(dates.searchsorted(pd.Timestamp(start), side="left")), 1)
    last = min(int(dates.searchsorted(pd.Timestamp(end), side="right")) - 1, panel.n_dates - 2)
    return sequence_inputs(panel, first, last, sigma_target, price_feature, annualisation)


def ingest_directory(raw_dir: PathLike, config: ResearchConfig) -> FactorPanel:
    """Load ``<raw_dir>/<SOURCE>/*.csv`` snapshots and build the configured panel"""
    raw_dir = Path(raw_dir)
    if not raw_dir.is_dir():
        raise ConfigurationError(f"Raw data directory not found: {raw_dir}", {"path": str(raw_dir)})

    wanted_assets = set(config.universe.assets)
    wanted_features = set(config.universe.feature_names)

    loaded: List[RawSeries] = []
    for source in DataSource:
        source_dir = raw_dir / source.value
        if not source_dir.is_dir():
            continue
        for path in sorted(source_dir.glob("*.csv")):
            for s in load_csv(path, source):
                if s.asset in wanted_assets and s.feature in wanted_features:
                    loaded.append(s)

    segmented: Dict[Tuple[str, str, DataSource], List[RawSeries]] = defaultdict(list)
    series: List[RawSeries] = []
    for s in loaded:
        if s.segment is None:
            series.append(s)
        else:
            segmented[(s.asset, s.feature, s.source)].append(s)
    for key in sorted(segmented, key=lambda k: (k[0], k[1], k[2].value)):
        series.append(link_segments(segmented[key]))

    logger.info("Raw series loaded", files=len(loaded), series=len(series), linked=len(segmented))

    calendar = Calendar.daily(config.calendar.start, config.calendar.end)
    return build_panel(
        series,
        calendar,
        policy=config.panel.policy,
        assets=config.universe.assets,
        features=config.universe.feature_names,
        ew_span=config.panel.ew_span,
        ew_min_periods=config.panel.ew_min_periods,
    )
