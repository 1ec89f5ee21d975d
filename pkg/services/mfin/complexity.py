"""Trainable-parameter counts of the MFIN architecture"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence
import pandas as pd

from schemas.mfin import MfinConfig

DEFAULT_INPUTS = 22
ASSET_COLUMNS = (1, 7, 20, 50)

# hyperparameter -> (values, fixed others)
SWEEPS = {
    "hidden_size": ((32, 64, 96, 128), {"n_filters": 40, "ts_filter_length": 10}),
    "n_filters": ((16, 32, 48, 64), {"hidden_size": 80, "ts_filter_length": 10}),
    "ts_filter_length": ((3, 5, 10, 15, 20), {"hidden_size": 80, "n_filters": 40}),
}


@dataclass(frozen=True)
class ParamCount:
    extractor: int
    reduction: int
    lstm: int
    head: int

    @property
    def total(self) -> int:
        return self.extractor + self.reduction + self.lstm + self.head

    @property
    def extractor_share(self) -> float:
        """Share of the inception block (convolutions plus reduction)"""
        return (self.extractor + self.reduction) / self.total

    def __int__(self) -> int:
        return self.total

    def as_dict(self) -> Dict[str, float]:
        return {**asdict(self), "total": self.total, "extractor_share": self.extractor_share}


def param_count(config: MfinConfig, n_assets: int, n_inputs: int = DEFAULT_INPUTS) -> ParamCount:
    """Closed-form count by stage.

    Convolution branches carry one bias per filter; the reduction maps the
    (2 N_I + 2) n_filters flattened branch outputs to n_filters; the LSTM
    reads N_A n_filters inputs; the head maps N_H to N_A.
    """
    nf = config.n_filters
    ell = config.ts_filter_length
    H = config.hidden_size
    return ParamCount(
        extractor=nf * (ell + n_inputs + ell * n_inputs + 1) + 4 * nf,
        reduction=(2 * n_inputs + 2) * nf * nf + nf,
        lstm=4 * (H * (n_assets * nf + H) + H),
        head=H * n_assets + n_assets,
    )


def complexity_table(
    n_inputs: int = DEFAULT_INPUTS,
    days: Optional[int] = None,
    asset_columns: Sequence[int] = ASSET_COLUMNS,
    base: Optional[MfinConfig] = None,
) -> pd.DataFrame:
    """Total parameters when one hyperparameter varies around the fixed medians.

    With ``days`` the frame gains a datapoints row of days x N_A x N_I.
    """
    base = base or MfinConfig()
    rows = {}
    for name, (values, fixed) in SWEEPS.items():
        for value in values:
            config = base.model_copy(update={**fixed, name: value})
            rows[(name, str(value))] = [param_count(config, n, n_inputs).total for n in asset_columns]
    if days is not None:
        rows[("datapoints", "")] = [days * n * n_inputs for n in asset_columns]

    frame = pd.DataFrame.from_dict(rows, orient="index", columns=[str(n) for n in asset_columns])
    frame.index = pd.MultiIndex.from_tuples(frame.index, names=["hyperparameter", "value"])
    frame.columns.name = "n_assets"
    return frame


def breakdown_table(config: MfinConfig, asset_columns: Sequence[int] = ASSET_COLUMNS, n_inputs: int = DEFAULT_INPUTS) -> pd.DataFrame:
    """Per-stage counts of one configuration for each asset count"""
    return pd.DataFrame(
        {str(n): param_count(config, n, n_inputs).as_dict() for n in asset_columns}
    ).T.rename_axis("n_assets")
