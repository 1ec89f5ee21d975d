"""ingest: raw CSV snapshots -> panel directory"""

from pathlib import Path
import structlog

from cli.context import RunContext
from services.ingest import ingest_directory

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("ingest", help="Build the factor panel from raw CSV snapshots")
    parser.add_argument("--raw-dir", help="Directory holding <SOURCE>/*.csv snapshots (default: <data-dir>/raw)")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    raw_dir = Path(ctx.args.raw_dir) if ctx.args.raw_dir else ctx.data_dir / "raw"
    panel = ingest_directory(raw_dir, ctx.config)
    manifest = ctx.panels.save(panel)

    print(
        f"panel: {len(manifest.assets)} assets x {len(manifest.features)} features x {panel.n_dates} days "
        f"({manifest.calendar_start}..{manifest.calendar_end}) -> {ctx.panels.directory}"
    )
    print(f"snapshot: {manifest.snapshot_hash}")
    return 0
