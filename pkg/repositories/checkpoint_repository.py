"""Checkpoint repository: JSON named-tensor checkpoints and training logs"""

from pathlib import Path
from typing import Dict, List, Optional, Union
import json
import numpy as np
import pandas as pd
import structlog

from core.exceptions import ConfigurationError, ResearchError, StorageError
from schemas.mfin import MfinConfig
from schemas.report import CheckpointManifest, TensorRecord
from services.mfin.model import MFIN, TrainedEnsemble
from services.mfin.training import TrainResult

logger = structlog.get_logger()

LOG_COLUMNS = ["epoch", "train_loss", "valid_loss", "lr"]


class CheckpointRepository:
    """Checkpoints under ``<root>/checkpoints/split_<k>/seed_<s>.json``"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.directory = self.root / "checkpoints"

    def split_dir(self, split: Optional[int]) -> Path:
        return self.directory / ("final" if split is None else f"split_{split}")

    def checkpoint_path(self, seed: int, split: Optional[int] = None) -> Path:
        return self.split_dir(split) / f"seed_{seed}.json"

    def log_path(self, seed: int, split: Optional[int] = None) -> Path:
        return self.split_dir(split) / f"seed_{seed}_log.csv"

    def save(self, result: TrainResult, split: Optional[int] = None) -> Path:
        """Write the best-epoch parameters and the per-epoch log of one seed"""
        model = result.model
        manifest = CheckpointManifest(
            config=model.config.model_dump(),
            seed=model.seed,
            n_assets=model.n_assets,
            n_inputs=model.n_inputs,
            split=split,
            best_epoch=result.best_epoch,
            best_valid_loss=result.best_valid_loss,
            tensors={
                name: TensorRecord(shape=list(values.shape), values=values.ravel().tolist())
                for name, values in model.state_dict().items()
            },
        )
        path = self.checkpoint_path(model.seed, split)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            # stdlib json writes repr floats, which reload bit-exactly
            path.write_text(json.dumps(manifest.model_dump(mode="python")), encoding="utf-8")
            self.save_log(result.history, model.seed, split)
        except OSError as e:
            logger.error("Failed to save checkpoint", path=str(path), error=str(e))
            raise StorageError(f"Failed to save checkpoint: {str(e)}", {"path": str(path)})

        logger.info("Checkpoint saved", path=str(path), seed=model.seed, split=split, best_epoch=result.best_epoch)
        return path

    def save_log(self, history: List[Dict[str, float]], seed: int, split: Optional[int] = None) -> Path:
        path = self.log_path(seed, split)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(history, columns=LOG_COLUMNS).to_csv(path, index=False, lineterminator="\n")
        return path

    def load_manifest(self, path: Union[str, Path]) -> CheckpointManifest:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Checkpoint not found: {path}", {"path": str(path)})
        try:
            return CheckpointManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError) as e:
            logger.error("Failed to read checkpoint", path=str(path), error=str(e))
            raise StorageError(f"Failed to read checkpoint: {str(e)}", {"path": str(path)})

    def load(self, path: Union[str, Path]) -> MFIN:
        """Rebuild the model of one checkpoint"""
        manifest = self.load_manifest(path)
        config = MfinConfig.model_validate(manifest.config)
        model = MFIN(config, manifest.n_assets, manifest.n_inputs, seed=manifest.seed)
        state = {
            name: np.asarray(record.values, dtype=np.float64).reshape(record.shape)
            for name, record in manifest.tensors.items()
        }
        model.load_state_dict(state)
        logger.debug("Checkpoint loaded", path=str(path), seed=manifest.seed)
        return model

    def load_log(self, seed: int, split: Optional[int] = None) -> pd.DataFrame:
        path = self.log_path(seed, split)
        try:
            return pd.read_csv(path, float_precision="round_trip")
        except OSError as e:
            raise StorageError(f"Failed to read training log: {str(e)}", {"path": str(path)})

    def load_ensemble(self, split: Optional[int] = None) -> TrainedEnsemble:
        """All seed checkpoints of one split, in seed order"""
        directory = self.split_dir(split)
        paths = sorted(directory.glob("seed_*.json"), key=lambda p: int(p.stem.split("_")[1]))
        if not paths:
            raise ConfigurationError(f"No checkpoints under {directory}", {"path": str(directory)})
        try:
            models = [self.load(p) for p in paths]
            return TrainedEnsemble(config=models[0].config, models=models)
        except ResearchError:
            raise
        except Exception as e:
            logger.error("Failed to load ensemble", path=str(directory), error=str(e))
            raise StorageError(f"Failed to load ensemble: {str(e)}", {"path": str(directory)})
