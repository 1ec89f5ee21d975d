"""Resolved settings and shared helpers for one command invocation"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import structlog

from core.config import Settings, settings
from models.panel import FactorPanel
from repositories.checkpoint_repository import CheckpointRepository
from repositories.panel_repository import PanelRepository
from repositories.report_repository import ReportRepository
from schemas.config import ResearchConfig
from schemas.report import RunManifest, SplitPlan
from services.backtest.splits import splits_from_config

logger = structlog.get_logger()


@dataclass(eq=False)
class RunContext:
    """Everything a command needs: flags override environment settings"""

    config: ResearchConfig
    data_dir: Path
    out_dir: Path
    seed: int
    threads: int
    args: argparse.Namespace = field(default_factory=argparse.Namespace)

    @classmethod
    def from_args(cls, args: argparse.Namespace, base: Optional[Settings] = None) -> "RunContext":
        base = base or settings
        config_file = args.config or base.CONFIG_FILE
        config = ResearchConfig.from_toml(config_file) if config_file else ResearchConfig()
        return cls(
            config=config,
            data_dir=Path(args.data_dir or base.DATA_DIR),
            out_dir=Path(args.out_dir or base.OUT_DIR),
            seed=base.SEED if args.seed is None else args.seed,
            threads=base.THREADS if args.threads is None else args.threads,
            args=args,
        )

    @property
    def panels(self) -> PanelRepository:
        return PanelRepository(self.data_dir)

    @property
    def reports(self) -> ReportRepository:
        return ReportRepository(self.out_dir)

    @property
    def checkpoints(self) -> CheckpointRepository:
        return CheckpointRepository(self.out_dir)

    def load_panel(self) -> FactorPanel:
        return self.panels.load()

    def split_plan(self, panel: FactorPanel) -> SplitPlan:
        """Annual plan bounded by the configured calendar and the panel's last date"""
        end = min(self.config.calendar.end, panel.dates[-1].date())
        return splits_from_config(self.config.calendar, end)

    def seeds(self, count: Optional[int] = None) -> List[int]:
        """Configured seeds, offset by ``--seed``"""
        seeds = [self.seed + s for s in self.config.backtest.seeds]
        return seeds[:count] if count else seeds

    def manifest(self, strategies: Sequence[str], plan: Optional[SplitPlan] = None) -> RunManifest:
        panel_manifest = self.panels.load_manifest()
        return RunManifest(
            config_hash=self.config.config_hash(),
            data_snapshot_hash=panel_manifest.snapshot_hash,
            seeds=self.seeds(),
            strategies=list(strategies),
            cost_grid=list(self.config.backtest.cost_grid),
            splits=[(s.test.start.isoformat(), s.test.end.isoformat()) for s in plan.splits] if plan else [],
            version=settings.APP_VERSION,
        )
