"""Panel repository: a directory of per-asset level CSVs plus a JSON manifest"""

from pathlib import Path
from typing import List, Union
import hashlib
import numpy as np
import pandas as pd
import structlog

from core.exceptions import ConfigurationError, DataIntegrityError, ResearchError, StorageError
from models.panel import Calendar, FactorPanel
from schemas.report import AvailabilitySpan, PanelManifest
from services.ingest import assemble_panel

logger = structlog.get_logger()

MANIFEST_FILE = "manifest.json"


def _availability(panel: FactorPanel) -> List[AvailabilitySpan]:
    spans = []
    for a, asset in enumerate(panel.assets):
        for j, feature in enumerate(panel.features):
            present = np.flatnonzero(panel.mask[:, a, j])
            spans.append(
                AvailabilitySpan(
                    asset=asset,
                    feature=feature,
                    first=panel.dates[present[0]].date() if present.size else None,
                    last=panel.dates[present[-1]].date() if present.size else None,
                )
            )
    return spans


class PanelRepository:
    """Stores the ingested panel under ``<root>/panel``"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.directory = self.root / "panel"

    def _asset_path(self, asset: str) -> Path:
        return self.directory / f"{asset}.csv"

    def exists(self) -> bool:
        return (self.directory / MANIFEST_FILE).is_file()

    def snapshot_hash(self, assets: List[str]) -> str:
        """SHA-256 over the level files in asset order"""
        digest = hashlib.sha256()
        for asset in assets:
            digest.update(asset.encode("utf-8"))
            digest.update(self._asset_path(asset).read_bytes())
        return digest.hexdigest()

    def save(self, panel: FactorPanel) -> PanelManifest:
        """Write levels (NaN where masked) and the manifest"""
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            for a, asset in enumerate(panel.assets):
                frame = pd.DataFrame(panel.levels[:, a, :], index=panel.dates, columns=list(panel.features))
                frame.index.name = "date"
                frame.to_csv(self._asset_path(asset), date_format="%Y-%m-%d", lineterminator="\n")

            manifest = PanelManifest(
                assets=list(panel.assets),
                features=list(panel.features),
                sources=dict(panel.sources),
                calendar_start=panel.dates[0].date(),
                calendar_end=panel.dates[-1].date(),
                ew_span=panel.ew_span,
                ew_min_periods=panel.ew_min_periods,
                availability=_availability(panel),
                snapshot_hash=self.snapshot_hash(list(panel.assets)),
            )
            (self.directory / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")

            logger.info(
                "Panel saved",
                path=str(self.directory),
                assets=len(panel.assets),
                features=len(panel.features),
                snapshot_hash=manifest.snapshot_hash[:12],
            )
            return manifest

        except OSError as e:
            logger.error("Failed to save panel", path=str(self.directory), error=str(e))
            raise StorageError(f"Failed to save panel: {str(e)}", {"path": str(self.directory)})

    def load_manifest(self) -> PanelManifest:
        path = self.directory / MANIFEST_FILE
        if not path.is_file():
            raise ConfigurationError(
                f"No ingested panel under {self.root}; run 'ingest' first", {"path": str(path)}
            )
        try:
            return PanelManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DataIntegrityError(f"Panel manifest is invalid: {str(e)}", {"path": str(path)})

    def load(self) -> FactorPanel:
        """Read levels back and recompute returns and EW statistics"""
        manifest = self.load_manifest()
        calendar = Calendar.daily(manifest.calendar_start, manifest.calendar_end)

        try:
            actual = self.snapshot_hash(manifest.assets)
            if actual != manifest.snapshot_hash:
                raise DataIntegrityError(
                    "Panel files do not match the manifest snapshot hash",
                    {"expected": manifest.snapshot_hash, "actual": actual},
                )

            levels = np.full((len(calendar), len(manifest.assets), len(manifest.features)), np.nan)
            for a, asset in enumerate(manifest.assets):
                frame = pd.read_csv(
                    self._asset_path(asset),
                    index_col="date",
                    parse_dates=["date"],
                    float_precision="round_trip",
                )
                if not frame.index.equals(calendar.dates) or list(frame.columns) != manifest.features:
                    raise DataIntegrityError(
                        f"Panel file for {asset} does not match the manifest layout", {"asset": asset}
                    )
                levels[:, a, :] = frame.to_numpy(dtype=float)

        except ResearchError:
            raise
        except (OSError, ValueError) as e:
            logger.error("Failed to load panel", path=str(self.directory), error=str(e))
            raise StorageError(f"Failed to load panel: {str(e)}", {"path": str(self.directory)})

        panel = assemble_panel(
            calendar,
            manifest.assets,
            manifest.features,
            levels,
            manifest.sources,
            manifest.ew_span,
            manifest.ew_min_periods,
        )
        logger.info("Panel loaded", path=str(self.directory), dates=len(calendar), snapshot_hash=manifest.snapshot_hash[:12])
        return panel
