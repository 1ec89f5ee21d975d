"""Report repository: CSV and JSON tables, portfolio series, manifests and charts"""

from datetime import date
from pathlib import Path
from typing import Any, Dict, Union
import json
import re
import math
import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel

from core.exceptions import ConfigurationError, StorageError
from models.portfolio import PortfolioSeries, WeightsMatrix
from schemas.report import RunManifest
from services.backtest.reporting import plot_equity

logger = structlog.get_logger()

MANIFEST_NAME = "run_manifest"


def file_stem(name: str) -> str:
    """Filesystem-safe name: 'CMB + MFIN' -> 'cmb_mfin'"""
    return re.sub(r"[^0-9a-z]+", "_", name.lower()).strip("_")


def _plain(value: Any) -> Any:
    """JSON-safe scalar: NaN and infinities become null, dates ISO strings"""
    if isinstance(value, (pd.Timestamp, date)):
        return value.strftime("%Y-%m-%d")
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _deep_plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(_plain(k)): _deep_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_deep_plain(v) for v in value]
    return _plain(value)


def frame_to_json(frame: pd.DataFrame) -> Dict[str, Any]:
    return {
        "index_names": [_plain(n) for n in frame.index.names],
        "index": [_plain(i) for i in frame.index],
        "columns": [_plain(c) for c in frame.columns],
        "data": [[_plain(v) for v in row] for row in frame.itertuples(index=False, name=None)],
    }


class ReportRepository:
    """Writes every report artifact of one run under ``<root>``"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def _prepare(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_table(self, name: str, frame: pd.DataFrame, json_copy: bool = True) -> Path:
        """``<name>.csv`` and, unless disabled, ``<name>.json``"""
        path = self.root / f"{name}.csv"
        try:
            frame.to_csv(self._prepare(path), date_format="%Y-%m-%d", lineterminator="\n")
            if json_copy:
                self.write_json(name, frame_to_json(frame))
        except OSError as e:
            logger.error("Failed to write table", name=name, error=str(e))
            raise StorageError(f"Failed to write table {name}: {str(e)}", {"path": str(path)})
        logger.info("Table written", path=str(path), rows=len(frame), columns=len(frame.columns))
        return path

    def read_table(self, name: str, index_col: Union[int, list] = 0, parse_dates: bool = False) -> pd.DataFrame:
        path = self.root / f"{name}.csv"
        if not path.is_file():
            raise ConfigurationError(f"Report table not found: {path}", {"path": str(path)})
        try:
            return pd.read_csv(path, index_col=index_col, parse_dates=parse_dates, float_precision="round_trip")
        except (OSError, ValueError) as e:
            raise StorageError(f"Failed to read table {name}: {str(e)}", {"path": str(path)})

    def write_json(self, name: str, payload: Union[BaseModel, Dict[str, Any], list]) -> Path:
        path = self.root / f"{name}.json"
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        payload = _deep_plain(payload)
        try:
            text = json.dumps(payload, indent=2, sort_keys=isinstance(payload, dict), allow_nan=False, default=_plain)
            self._prepare(path).write_text(text + "\n", encoding="utf-8")
        except OSError as e:
            logger.error("Failed to write JSON", name=name, error=str(e))
            raise StorageError(f"Failed to write {name}.json: {str(e)}", {"path": str(path)})
        return path

    def read_json(self, name: str) -> Any:
        path = self.root / f"{name}.json"
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigurationError(f"Report file not found: {path}", {"path": str(path)})
        except (OSError, ValueError) as e:
            raise StorageError(f"Failed to read {name}.json: {str(e)}", {"path": str(path)})

    def write_series(self, name: str, series: PortfolioSeries, positions: bool = True) -> Path:
        """``series/<name>.csv`` with date,gross,net,turnover,scale_factor"""
        path = self.root / "series" / f"{name}.csv"
        try:
            series.frame().to_csv(self._prepare(path), date_format="%Y-%m-%d", lineterminator="\n")
            if positions:
                frame = series.positions.copy()
                frame.index.name = "date"
                frame.to_csv(
                    self._prepare(self.root / "positions" / f"{name}.csv"),
                    date_format="%Y-%m-%d",
                    lineterminator="\n",
                )
        except OSError as e:
            logger.error("Failed to write series", name=name, error=str(e))
            raise StorageError(f"Failed to write series {name}: {str(e)}", {"path": str(path)})
        logger.debug("Series written", path=str(path), days=len(series))
        return path

    def read_positions(self, name: str) -> pd.DataFrame:
        path = self.root / "positions" / f"{name}.csv"
        if not path.is_file():
            raise ConfigurationError(f"Positions not found: {path}", {"path": str(path)})
        return pd.read_csv(path, index_col="date", parse_dates=["date"], float_precision="round_trip")

    def read_series(self, name: str) -> pd.DataFrame:
        path = self.root / "series" / f"{name}.csv"
        if not path.is_file():
            raise ConfigurationError(f"Series not found: {path}", {"path": str(path)})
        return pd.read_csv(path, index_col="date", parse_dates=["date"], float_precision="round_trip")

    def write_weights(self, name: str, weights: WeightsMatrix) -> Path:
        """Decision-date weight matrix, one column per asset"""
        path = self.root / "weights" / f"{name}.csv"
        frame = weights.values.copy()
        frame.index.name = "date"
        try:
            frame.to_csv(self._prepare(path), date_format="%Y-%m-%d", lineterminator="\n")
        except OSError as e:
            raise StorageError(f"Failed to write weights {name}: {str(e)}", {"path": str(path)})
        return path

    def write_manifest(self, manifest: RunManifest) -> Path:
        path = self.write_json(MANIFEST_NAME, manifest)
        logger.info(
            "Run manifest written",
            path=str(path),
            config_hash=manifest.config_hash[:12],
            data_snapshot_hash=manifest.data_snapshot_hash[:12],
        )
        return path

    def read_manifest(self) -> RunManifest:
        return RunManifest.model_validate(self.read_json(MANIFEST_NAME))

    def write_chart(self, name: str, curves: pd.DataFrame, title: str = "Cumulative returns") -> Path:
        path = self._prepare(self.root / f"{name}.svg")
        try:
            return plot_equity(curves, path, title)
        except OSError as e:
            logger.error("Failed to write chart", name=name, error=str(e))
            raise StorageError(f"Failed to write chart {name}: {str(e)}", {"path": str(path)})
