"""train-mfin: fit the MFIN seed ensemble on one training span and keep the checkpoints"""

import pandas as pd
import structlog

from cli.context import RunContext
from core.exceptions import ConfigurationError
from services.ingest import span_inputs
from services.mfin.complexity import param_count
from services.mfin.hyperband import hyperband_search
from services.mfin.training import train_ensemble

logger = structlog.get_logger()


def register(subparsers):
    parser = subparsers.add_parser("train-mfin", help="Train the MFIN ensemble and write checkpoints")
    parser.add_argument("--split", type=int, help="Train on this split's training span (default: all data)")
    parser.add_argument("--seeds", type=int, help="Use only the first N configured seeds")
    parser.add_argument("--no-search", action="store_true", help="Skip Hyperband and train the configured block")
    parser.add_argument("--epochs", type=int, help="Override max_epochs")
    parser.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    panel = ctx.load_panel()
    p = ctx.config.portfolio

    split_index = args.split
    if split_index is None:
        end = panel.dates[-1]
    else:
        plan = ctx.split_plan(panel)
        if not 0 <= split_index < len(plan.splits):
            raise ConfigurationError(
                f"Split {split_index} does not exist", {"split": split_index, "splits": len(plan.splits)}
            )
        end = pd.Timestamp(plan.splits[split_index].train.end)

    train_panel = panel.truncate(end)
    inputs = span_inputs(train_panel, train_panel.dates[0], end, p.sigma_target, ctx.config.universe.price_feature)

    config = ctx.config.mfin
    if args.epochs:
        config = config.model_copy(update={"max_epochs": args.epochs})
    seeds = ctx.seeds(args.seeds)
    search = ctx.config.hyperband.enabled and not args.no_search
    if search:
        config = hyperband_search(ctx.config.search, inputs, config, ctx.config.hyperband, seeds[0], ctx.threads).config

    results = train_ensemble(config, inputs, seeds, n_jobs=ctx.threads)
    for result in results:
        ctx.checkpoints.save(result, split_index)
    ctx.reports.write_json("mfin/final_config" if split_index is None else f"mfin/split_{split_index}_config", config)

    counts = param_count(config, len(inputs.assets), len(inputs.features))
    logger.info("Ensemble trained", seeds=seeds, params=counts.total, rows=len(inputs))
    summary = pd.DataFrame(
        {
            "best_epoch": [r.best_epoch for r in results],
            "best_valid_loss": [r.best_valid_loss for r in results],
            "epochs": [r.epochs_run for r in results],
            "stopped_early": [r.stopped_early for r in results],
        },
        index=pd.Index(seeds, name="seed"),
    )
    print(summary.to_string())
    print(f"parameters: {counts.total}; checkpoints -> {ctx.checkpoints.split_dir(split_index)}")
    return 0
