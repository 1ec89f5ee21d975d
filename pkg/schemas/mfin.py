"""MFIN hyperparameter schemas"""

from itertools import product
from typing import Any, Dict, Iterator, List, Literal
from pydantic import BaseModel, ConfigDict, Field, field_validator


# Tuned block grids
COST_GRID = [0.0, 0.5, 1.0, 2.0, 5.0]
CORRELATION_PENALTY_GRID = [0.0, 1.0, 2.0, 5.0]
DROPOUT_GRID = [0.1, 0.2, 0.3]
LEARNING_RATE_GRID = [1e-3, 1e-4, 1e-5]
HIDDEN_SIZE_GRID = [32, 64, 96, 128]
N_FILTERS_GRID = [16, 32, 48, 64]
TS_FILTER_LENGTH_GRID = [3, 5, 10, 15, 20]

TUNED_KEYS = (
    "cost_bps",
    "correlation_penalty",
    "dropout_rate",
    "learning_rate",
    "hidden_size",
    "n_filters",
    "ts_filter_length",
)


class MfinConfig(BaseModel):
    """Hyperparameters of one MFIN model.

    Off-grid values are accepted so small configurations can be trained
    quickly; ``on_grid`` reports whether every tuned value sits on the
    search grid.
    """
    model_config = ConfigDict(frozen=True)

    # Fixed block
    window: int = Field(100, ge=2, description="Sequence length T")
    batch_size: int = Field(100, ge=1, description="Time steps per optimisation step")
    max_epochs: int = Field(250, ge=1)
    early_stopping: int = Field(25, ge=1, description="Stale validation epochs before stopping")
    train_valid_split: float = Field(0.9, gt=0, lt=1)
    activation: Literal["elu"] = "elu"
    valid_cost_bps: float = Field(0.0, description="Cost coefficient of the validation loss")
    valid_correlation_penalty: float = Field(0.0, description="Correlation penalty of the validation loss")

    # Tuned block
    cost_bps: float = Field(0.0, ge=0, description="C of the training loss, basis points")
    correlation_penalty: float = Field(0.0, ge=0, description="K of the training loss")
    dropout_rate: float = Field(0.2, ge=0, lt=1)
    learning_rate: float = Field(1e-3, gt=0)
    hidden_size: int = Field(64, ge=1, description="LSTM hidden size N_H")
    n_filters: int = Field(32, ge=1)
    ts_filter_length: int = Field(10, ge=1, description="Temporal filter length")

    @field_validator("valid_cost_bps", "valid_correlation_penalty")
    @classmethod
    def validation_terms_are_zero(cls, v):
        if v != 0:
            raise ValueError("validation loss uses C = K = 0")
        return v

    @field_validator("ts_filter_length")
    @classmethod
    def filter_fits_window(cls, v, info):
        window = info.data.get("window")
        if window is not None and v > window:
            raise ValueError("ts_filter_length must not exceed window")
        return v

    def tuned(self) -> Dict[str, Any]:
        return {key: getattr(self, key) for key in TUNED_KEYS}

    def on_grid(self, space: "SearchSpace" = None) -> bool:
        space = space or SearchSpace()
        return all(getattr(self, key) in getattr(space, key) for key in TUNED_KEYS)


class SearchSpace(BaseModel):
    """Tuned-block grids searched by Hyperband"""
    model_config = ConfigDict(frozen=True)

    cost_bps: List[float] = Field(default_factory=lambda: list(COST_GRID))
    correlation_penalty: List[float] = Field(default_factory=lambda: list(CORRELATION_PENALTY_GRID))
    dropout_rate: List[float] = Field(default_factory=lambda: list(DROPOUT_GRID))
    learning_rate: List[float] = Field(default_factory=lambda: list(LEARNING_RATE_GRID))
    hidden_size: List[int] = Field(default_factory=lambda: list(HIDDEN_SIZE_GRID))
    n_filters: List[int] = Field(default_factory=lambda: list(N_FILTERS_GRID))
    ts_filter_length: List[int] = Field(default_factory=lambda: list(TS_FILTER_LENGTH_GRID))

    @field_validator(*TUNED_KEYS)
    @classmethod
    def non_empty(cls, v):
        if not v:
            raise ValueError("grid must not be empty")
        return sorted(set(v))

    def size(self) -> int:
        total = 1
        for key in TUNED_KEYS:
            total *= len(getattr(self, key))
        return total

    def points(self) -> Iterator[Dict[str, Any]]:
        """Cartesian product in a fixed key order"""
        grids = [getattr(self, key) for key in TUNED_KEYS]
        for values in product(*grids):
            yield dict(zip(TUNED_KEYS, values))


class HyperbandConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    enabled: bool = True
    max_epochs: int = Field(10, ge=1, description="Maximum epochs R of one trial")
    iterations: int = Field(1, ge=1)
    factor: int = Field(3, ge=2, description="Reduction factor eta")
    max_trials: int = Field(30, ge=1, description="Cap on sampled configurations")
