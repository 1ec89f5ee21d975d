"""MFIN training loop with chronological chunks and early stopping"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import math
import numpy as np
import structlog
from joblib import Parallel, delayed

from core.exceptions import NonFiniteLossError, WindowError
from core.logging import metrics_logger
from models.panel import ModelInputs
from schemas.mfin import MfinConfig
from services.autodiff import Adam, no_grad
from services.mfin.loss import LossResult, batch_loss, benchmark_returns, chunk_returns, returns_loss
from services.mfin.model import MFIN

logger = structlog.get_logger()


@dataclass
class EarlyStopping:
    """Counts epochs whose validation loss does not improve on the best so far"""

    patience: int
    best: float = math.inf
    best_epoch: int = -1
    stale: int = 0

    def update(self, loss: float, epoch: int) -> bool:
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


@dataclass(eq=False)
class TrainResult:
    model: MFIN
    history: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_loss: float = math.inf
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def split_train_valid(n_rows: int, train_fraction: float = 0.9) -> Tuple[int, int]:
    """Chronological split: the last ceil((1 - fraction) n) rows validate"""
    n_valid = int(math.ceil(n_rows * (1.0 - train_fraction) - 1e-9))
    n_train = n_rows - n_valid
    if n_train < 2 or n_valid < 2:
        raise WindowError(
            "Training window too short for a train/valid split",
            {"rows": n_rows, "train": n_train, "valid": n_valid},
        )
    return n_train, n_valid


def contiguous_chunks(n_rows: int, length: int) -> List[Tuple[int, int]]:
    """[start, stop) chunks of ``length`` rows in order; a final remainder under 2 rows is dropped"""
    chunks = []
    for start in range(0, n_rows, length):
        stop = min(start + length, n_rows)
        if stop - start >= 2:
            chunks.append((start, stop))
    return chunks


def _check_finite(result: LossResult, epoch: int, step: int, seed: int):
    value = result.item()
    if not math.isfinite(value):
        raise NonFiniteLossError(
            "Training loss is not finite",
            {"epoch": epoch, "step": step, "seed": seed, "loss": value},
        )


def validation_loss(model: MFIN, inputs: ModelInputs, n_train: int, config: MfinConfig) -> LossResult:
    """Eval-mode loss on the validation rows, run with up to ``window`` training rows as context"""
    context = min(n_train, config.window)
    X = inputs.X[n_train - context:]
    Y1 = inputs.Y1[n_train:]
    Y2 = inputs.Y2[n_train:]
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            weights = model(X)[context:]
            returns = chunk_returns(weights, Y1, Y2, config.valid_cost_bps)
            benchmark = benchmark_returns(Y1, Y2, config.valid_cost_bps)
            return returns_loss(returns, benchmark, config.valid_correlation_penalty)
    finally:
        model.train(was_training)


def train(
    config: MfinConfig,
    inputs: ModelInputs,
    seed: int = 0,
    max_epochs: Optional[int] = None,
    model: Optional[MFIN] = None,
) -> TrainResult:
    """Fit one seed with Adam over chronological contiguous chunks.

    Each chunk starts from a zero recurrent state; chunks are never
    shuffled. Returns the parameters of the best validation epoch.
    """
    max_epochs = max_epochs or config.max_epochs
    n_train, n_valid = split_train_valid(len(inputs), config.train_valid_split)
    chunks = contiguous_chunks(n_train, config.window)
    if not chunks:
        raise WindowError("No training chunk of at least two rows", {"rows": n_train})
    per_step = max(1, config.batch_size // config.window)
    steps = [chunks[i:i + per_step] for i in range(0, len(chunks), per_step)]

    n_assets, n_inputs = inputs.X.shape[1:]
    model = model or MFIN(config, n_assets, n_inputs, seed=seed)
    optimizer = Adam(model.parameters(), learning_rate=config.learning_rate)
    stopper = EarlyStopping(patience=config.early_stopping)
    result = TrainResult(model=model)
    best_state = model.state_dict()

    logger.info(
        "Training started",
        seed=seed,
        rows=len(inputs),
        train_rows=n_train,
        valid_rows=n_valid,
        steps_per_epoch=len(steps),
        params=model.param_count(),
    )

    for epoch in range(max_epochs):
        model.train()
        step_losses = []
        for step_index, group in enumerate(steps):
            optimizer.zero_grad()
            weights = [model(inputs.X[a:b]) for a, b in group]
            loss = batch_loss(
                weights,
                [inputs.Y1[a:b] for a, b in group],
                [inputs.Y2[a:b] for a, b in group],
                config.cost_bps,
                config.correlation_penalty,
            )
            _check_finite(loss, epoch, step_index, seed)
            if not loss.degenerate:
                loss.loss.backward()
                optimizer.step()
            step_losses.append(loss.item())

        valid = validation_loss(model, inputs, n_train, config)
        _check_finite(valid, epoch, -1, seed)
        train_loss = float(np.mean(step_losses))
        result.history.append(
            {"epoch": epoch, "train_loss": train_loss, "valid_loss": valid.item(), "lr": config.learning_rate}
        )
        metrics_logger.log_training_epoch(seed, epoch, train_loss, valid.item(), config.learning_rate)

        if stopper.update(valid.item(), epoch):
            best_state = model.state_dict()
        if stopper.should_stop:
            result.stopped_early = True
            logger.info("Early stopping", seed=seed, epoch=epoch, best_epoch=stopper.best_epoch)
            break

    model.load_state_dict(best_state)
    result.best_epoch = stopper.best_epoch
    result.best_valid_loss = stopper.best
    logger.info(
        "Training completed",
        seed=seed,
        epochs=result.epochs_run,
        best_epoch=result.best_epoch,
        best_valid_loss=round(result.best_valid_loss, 6),
    )
    return result


def train_ensemble(
    config: MfinConfig,
    inputs: ModelInputs,
    seeds: Sequence[int],
    n_jobs: int = 1,
) -> List[TrainResult]:
    """Train one model per seed; results come back in seed order"""
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(train)(config, inputs, s) for s in seeds)


__all__ = [
    "EarlyStopping",
    "TrainResult",
    "contiguous_chunks",
    "split_train_valid",
    "train",
    "train_ensemble",
    "validation_loss",
]
