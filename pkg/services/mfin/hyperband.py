"""Hyperband search over the tuned MFIN hyperparameters"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import math
import numpy as np
import structlog
from joblib import Parallel, delayed

from core.exceptions import ConfigurationError
from models.panel import ModelInputs
from schemas.mfin import HyperbandConfig, MfinConfig, SearchSpace
from services.mfin.training import train

logger = structlog.get_logger()


@dataclass(frozen=True)
class Rung:
    trials: int
    epochs: int


@dataclass
class Trial:
    bracket: int
    rung: int
    params: Dict[str, Any]
    epochs: int
    valid_loss: float


@dataclass
class HyperbandResult:
    config: MfinConfig
    valid_loss: float
    trials: List[Trial] = field(default_factory=list)

    @property
    def n_configurations(self) -> int:
        return len({(t.bracket, tuple(sorted(t.params.items()))) for t in self.trials if t.rung == 0})


def hyperband_schedule(max_epochs: int = 10, factor: int = 3) -> List[List[Rung]]:
    """Successive-halving brackets, most exploratory first.

    Bracket s starts ceil((s_max + 1) / (s + 1) * factor^s) trials at
    max_epochs * factor^-s epochs (rounded up) and keeps the best 1/factor
    at each rung until a rung trains for ``max_epochs``.
    """
    if max_epochs < 1 or factor < 2:
        raise ConfigurationError("Hyperband needs max_epochs >= 1 and factor >= 2")
    s_max = int(math.floor(math.log(max_epochs, factor) + 1e-9))
    brackets = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil((s_max + 1) / (s + 1) * factor ** s - 1e-9))
        rungs = []
        for i in range(s + 1):
            trials = max(1, int(math.floor(n * factor ** -i + 1e-9)))
            epochs = int(math.ceil(max_epochs * factor ** (i - s) - 1e-9))
            rungs.append(Rung(trials=trials, epochs=min(epochs, max_epochs)))
        brackets.append(rungs)
    return brackets


def _sample(space: SearchSpace, n: int, rng: np.random.Generator) -> List[Dict[str, Any]]:
    points = list(space.points())
    if n >= len(points):
        picks = list(range(len(points))) + list(rng.integers(0, len(points), size=n - len(points)))
    else:
        picks = sorted(rng.choice(len(points), size=n, replace=False))
    return [points[int(i)] for i in picks]


def _evaluate(base: MfinConfig, params: Dict[str, Any], inputs: ModelInputs, epochs: int, seed: int) -> float:
    config = MfinConfig(**{**base.model_dump(), **params})
    return train(config, inputs, seed=seed, max_epochs=epochs).best_valid_loss


def hyperband_search(
    space: SearchSpace,
    inputs: ModelInputs,
    base: Optional[MfinConfig] = None,
    hyperband: Optional[HyperbandConfig] = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> HyperbandResult:
    """Pick the tuned block with the lowest validation loss.

    Trials are trained from scratch at each rung with the same seed. The
    number of sampled configurations across all brackets is capped at
    ``max_trials``; ties keep the earlier trial.
    """
    base = base or MfinConfig()
    hyperband = hyperband or HyperbandConfig()
    rng = np.random.default_rng(seed)
    schedule = hyperband_schedule(hyperband.max_epochs, hyperband.factor)

    if space.size() == 1:
        params = next(space.points())
        logger.info("Single-point search space", params=params)
        return HyperbandResult(config=MfinConfig(**{**base.model_dump(), **params}), valid_loss=math.nan)

    trials: List[Trial] = []
    best: Tuple[float, Optional[Dict[str, Any]]] = (math.inf, None)
    remaining = hyperband.max_trials

    for iteration in range(hyperband.iterations):
        for bracket_index, rungs in enumerate(schedule):
            if remaining <= 0:
                break
            n = min(rungs[0].trials, remaining)
            remaining -= n
            candidates = _sample(space, n, rng)
            bracket = iteration * len(schedule) + bracket_index

            for rung_index, rung in enumerate(rungs):
                keep = candidates if rung_index == 0 else candidates[:max(1, min(rung.trials, len(candidates)))]
                losses = Parallel(n_jobs=n_jobs, prefer="threads")(
                    delayed(_evaluate)(base, params, inputs, rung.epochs, seed) for params in keep
                )
                for params, loss in zip(keep, losses):
                    trials.append(Trial(bracket, rung_index, params, rung.epochs, float(loss)))
                order = sorted(range(len(keep)), key=lambda i: (losses[i], i))
                candidates = [keep[i] for i in order]
                if rung_index == len(rungs) - 1 and losses[order[0]] < best[0]:
                    best = (float(losses[order[0]]), keep[order[0]])
                logger.info(
                    "Hyperband rung evaluated",
                    bracket=bracket,
                    rung=rung_index,
                    trials=len(keep),
                    epochs=rung.epochs,
                    best_loss=round(float(losses[order[0]]), 6),
                )

    if best[1] is None:
        raise ConfigurationError("Hyperband evaluated no configuration", {"max_trials": hyperband.max_trials})

    config = MfinConfig(**{**base.model_dump(), **best[1]})
    logger.info("Hyperband search completed", best_loss=round(best[0], 6), params=best[1], trials=len(trials))
    return HyperbandResult(config=config, valid_loss=best[0], trials=trials)
