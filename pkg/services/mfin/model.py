"""Multi-factor inception network: shared convolutional extractor, LSTM position sizer, tanh head"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional
import numpy as np
import pandas as pd
import structlog
from numpy.lib.stride_tricks import sliding_window_view

from core.exceptions import ConfigurationError, ShapeError, WindowError
from models.panel import FactorPanel
from models.portfolio import WeightsMatrix
from schemas.mfin import MfinConfig
from services.autodiff import LSTM, Conv2dCausal, Dense, Dropout, Module, Tensor, concat, no_grad
from services.ingest import sequence_inputs
from services.portfolio import ensemble_average

logger = structlog.get_logger()

BRANCHES = ("ts", "cs", "combined", "pointwise")
PREDICT_BATCH = 32


class OrigCIM(Module):
    """Inception block applied to each asset's (T x N_I) return matrix.

    Branch footprints: time series (l x 1), cross section (1 x N_I),
    combined (l x N_I) and pointwise (1 x 1), each with ``n_filters``
    channels and causal in time. The time-series and pointwise branches keep
    width N_I, the other two collapse it to 1; the branch outputs are
    flattened along the learnt-feature axis and reduced pointwise to
    ``n_filters`` channels followed by ELU and dropout.
    """

    def __init__(self, n_inputs: int, n_filters: int, ts_filter_length: int, dropout_rate: float, rng: np.random.Generator):
        self.n_inputs = n_inputs
        self.n_filters = n_filters
        self.ts = Conv2dCausal(ts_filter_length, 1, 1, n_filters, rng)
        self.cs = Conv2dCausal(1, n_inputs, 1, n_filters, rng)
        self.combined = Conv2dCausal(ts_filter_length, n_inputs, 1, n_filters, rng)
        self.pointwise = Conv2dCausal(1, 1, 1, n_filters, rng)
        self.reduce = Dense((2 * n_inputs + 2) * n_filters, n_filters, rng)
        self.dropout = Dropout(dropout_rate, rng)

    def branch_outputs(self, x: Tensor) -> Dict[str, Tensor]:
        """x: (..., T, N_I) -> {branch: (..., T, W_branch, n_filters)}"""
        if x.shape[-1] != self.n_inputs:
            raise ShapeError("Extractor input width mismatch", {"x": x.shape, "n_inputs": self.n_inputs})
        grid = x.reshape(x.shape + (1,))
        return {name: getattr(self, name)(grid) for name in BRANCHES}

    def __call__(self, x: Tensor) -> Tensor:
        """x: (..., T, N_I) -> (..., T, n_filters)"""
        branches = self.branch_outputs(x)
        features = concat([branches[name] for name in BRANCHES], axis=-2)
        flat = features.reshape(features.shape[:-2] + ((2 * self.n_inputs + 2) * self.n_filters,))
        return self.dropout(self.reduce(flat).elu())


class MFIN(Module):
    """Weights w_{i,t} in (-1, 1) from a (T x N_A x N_I) block of standardized returns.

    The extractor is shared by every asset; the LSTM reads the per-date
    concatenation of all assets' features and a dense layer maps its state
    to one output per asset.
    """

    def __init__(self, config: MfinConfig, n_assets: int, n_inputs: int, seed: int = 0):
        if config.ts_filter_length > config.window:
            raise ConfigurationError(
                "Temporal filter is longer than the sequence window",
                {"ts_filter_length": config.ts_filter_length, "window": config.window},
            )
        rng = np.random.default_rng(seed)
        self.config = config
        self.seed = seed
        self.n_assets = n_assets
        self.n_inputs = n_inputs
        self.extractor = OrigCIM(n_inputs, config.n_filters, config.ts_filter_length, config.dropout_rate, rng)
        self.sizer = LSTM(n_assets * config.n_filters, config.hidden_size, rng)
        self.sizer_dropout = Dropout(config.dropout_rate, rng)
        self.head = Dense(config.hidden_size, n_assets, rng)

    def features(self, X: Tensor) -> Tensor:
        """([B,] T, N_A, N_I) -> ([B,] T, N_A, n_filters)"""
        if X.ndim not in (3, 4) or X.shape[-2:] != (self.n_assets, self.n_inputs):
            raise ShapeError(
                "MFIN expects ([B,] T, N_A, N_I)",
                {"X": X.shape, "n_assets": self.n_assets, "n_inputs": self.n_inputs},
            )
        lead = tuple(range(X.ndim - 3))
        swap = lead + (X.ndim - 2, X.ndim - 3, X.ndim - 1)
        return self.extractor(X.transpose(swap)).transpose(swap)

    def __call__(self, X) -> Tensor:
        X = X if isinstance(X, Tensor) else Tensor(X)
        features = self.features(X)
        sized = self.sizer(features.reshape(features.shape[:-2] + (self.n_assets * self.config.n_filters,)))
        return self.head(self.sizer_dropout(sized)).tanh()

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Eval-mode weights without building a graph"""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self(X).data.copy()
        finally:
            self.train(was_training)


def rolling_predict(model: MFIN, X: np.ndarray, first: int, window: int, batch: int = PREDICT_BATCH) -> np.ndarray:
    """Weights for rows ``first..`` of X, each the last output over the ``window`` rows ending at it.

    Rows before the start of X are zero, as standardized returns are on
    dates without data.
    """
    n, n_assets, n_inputs = X.shape
    if not 0 <= first < n:
        raise WindowError("First prediction row is outside the inputs", {"first": first, "rows": n})
    padded = np.concatenate([np.zeros((window - 1, n_assets, n_inputs)), X], axis=0)
    # (n, N_A, N_I, window) -> (n, window, N_A, N_I)
    windows = np.moveaxis(sliding_window_view(padded, window, axis=0), -1, 1)[first:]

    out = np.empty((len(windows), n_assets))
    for start in range(0, len(windows), batch):
        block = np.ascontiguousarray(windows[start:start + batch])
        out[start:start + batch] = model.predict(block)[:, -1, :]
    return out


def predict_weights(
    model: MFIN,
    panel: FactorPanel,
    start,
    end,
    sigma_target: float = 0.15,
    price_feature: str = "open",
    label: str = "MFIN",
) -> WeightsMatrix:
    """Out-of-sample weights for decision dates in [start, end]"""
    window = model.config.window
    dates = panel.dates
    first = max(int(dates.searchsorted(pd.Timestamp(start), side="left")), 1)
    last = min(int(dates.searchsorted(pd.Timestamp(end), side="right")) - 1, panel.n_dates - 2)
    if first > last:
        raise WindowError("No decision dates to predict", {"start": str(start), "end": str(end)})
    history = max(1, first - window + 1)
    inputs = sequence_inputs(panel, history, last, sigma_target, price_feature)
    values = rolling_predict(model, inputs.X, first - history, window)
    frame = pd.DataFrame(values, index=inputs.dates[first - history:], columns=list(inputs.assets))
    return WeightsMatrix(values=frame.clip(-1.0, 1.0), label=label, provenance={"seed": model.seed})


@dataclass(eq=False)
class TrainedEnsemble:
    """Seed models sharing one configuration"""

    config: MfinConfig
    models: List[MFIN] = field(default_factory=list)
    window_end: Optional[pd.Timestamp] = None

    def __post_init__(self):
        for m in self.models:
            if m.config != self.config:
                raise ConfigurationError("Ensemble members must share one configuration", {"seed": m.seed})

    @property
    def seeds(self) -> List[int]:
        return [m.seed for m in self.models]

    def member_weights(self, panel: FactorPanel, start, end, sigma_target: float = 0.15, price_feature: str = "open") -> List[WeightsMatrix]:
        return [predict_weights(m, panel, start, end, sigma_target, price_feature) for m in self.models]

    def weights(
        self,
        panel: FactorPanel,
        start,
        end,
        sigma_target: float = 0.15,
        price_feature: str = "open",
        label: str = "MFIN",
    ) -> WeightsMatrix:
        """Arithmetic mean of the member weight matrices"""
        members = self.member_weights(panel, start, end, sigma_target, price_feature)
        averaged = ensemble_average(members, label=label)
        logger.info("Ensemble weights averaged", members=len(members), days=len(averaged.dates))
        return averaged
