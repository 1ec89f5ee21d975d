"""Sharpe-ratio training loss with turnover costs and a benchmark-correlation penalty"""

from dataclasses import dataclass
import math
from typing import Optional, Sequence
import numpy as np

from services.autodiff import Tensor, concat

BPS = 1e-4
DEGENERATE_PENALTY = 100.0
DEGENERATE_STD = 1e-12


@dataclass(eq=False)
class LossResult:
    loss: Tensor
    sharpe: float
    correlation: float
    degenerate: bool = False

    def item(self) -> float:
        return self.loss.item()


def chunk_returns(weights: Tensor, Y1: np.ndarray, Y2: np.ndarray, cost_bps: float) -> Tensor:
    """Portfolio return per row of one contiguous chunk.

    R_t = mean_i [ w_{i,t} Y1_{i,t} - C |w_{i,t} Y2_{i,t} - w_{i,t-1} Y2_{i,t-1}| ];
    the chunk's first row carries no cost.
    """
    gross = (weights * Y1).mean(axis=-1)
    if cost_bps == 0 or weights.shape[0] < 2:
        return gross
    scaled = weights * Y2
    change = (scaled[1:] - scaled[:-1]).abs().mean(axis=-1)
    cost = concat([Tensor(np.zeros(1)), change * (cost_bps * BPS)], axis=0)
    return gross - cost


def benchmark_returns(Y1: np.ndarray, Y2: np.ndarray, cost_bps: float) -> np.ndarray:
    """Equal-weight volatility-scaled long-only returns over the same rows"""
    return chunk_returns(Tensor(np.ones_like(Y1)), Y1, Y2, cost_bps).data


def _pearson(x: Tensor, y: np.ndarray) -> Optional[Tensor]:
    y_centred = y - y.mean()
    y_scale = math.sqrt(float((y_centred ** 2).sum()))
    x_centred = x - x.mean()
    x_scale = (x_centred * x_centred).sum().sqrt()
    if y_scale < DEGENERATE_STD or x_scale.item() < DEGENERATE_STD:
        return None
    return (x_centred * y_centred).sum() / (x_scale * y_scale)


def returns_loss(
    returns: Tensor,
    benchmark: Optional[np.ndarray] = None,
    correlation_penalty: float = 0.0,
    annualisation: int = 252,
) -> LossResult:
    """-sqrt(252) mean(R) / std(R) + K |corr(R, R_b)|; a flat return stream scores the fixed penalty"""
    if returns.data.size < 2 or float(np.std(returns.data, ddof=1)) < DEGENERATE_STD:
        return LossResult(
            loss=Tensor(np.array(DEGENERATE_PENALTY)),
            sharpe=float("nan"),
            correlation=float("nan"),
            degenerate=True,
        )

    sharpe = returns.mean() / returns.std() * math.sqrt(annualisation)
    loss = -sharpe
    correlation = float("nan")
    if benchmark is not None:
        rho = _pearson(returns, np.asarray(benchmark, dtype=float))
        if rho is not None:
            correlation = rho.item()
            if correlation_penalty:
                loss = loss + correlation_penalty * rho.abs()
    return LossResult(loss=loss, sharpe=sharpe.item(), correlation=correlation)


def sharpe_loss(
    weights: Tensor,
    Y1: np.ndarray,
    Y2: np.ndarray,
    cost_bps: float = 0.0,
    correlation_penalty: float = 0.0,
    benchmark: Optional[np.ndarray] = None,
    annualisation: int = 252,
) -> LossResult:
    """Loss of one chunk of weights; the benchmark defaults to long-only over the same rows"""
    if benchmark is None:
        benchmark = benchmark_returns(Y1, Y2, cost_bps)
    return returns_loss(chunk_returns(weights, Y1, Y2, cost_bps), benchmark, correlation_penalty, annualisation)


def batch_loss(
    weights: Sequence[Tensor],
    Y1: Sequence[np.ndarray],
    Y2: Sequence[np.ndarray],
    cost_bps: float = 0.0,
    correlation_penalty: float = 0.0,
    annualisation: int = 252,
) -> LossResult:
    """Loss over the returns of several chunks, each chunk priced on its own"""
    returns = concat([chunk_returns(w, y1, y2, cost_bps) for w, y1, y2 in zip(weights, Y1, Y2)], axis=0)
    benchmark = np.concatenate([benchmark_returns(y1, y2, cost_bps) for y1, y2 in zip(Y1, Y2)])
    return returns_loss(returns, benchmark, correlation_penalty, annualisation)
