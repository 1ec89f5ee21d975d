"""Minimal reverse-mode autodiff engine"""

from services.autodiff.layers import LSTM, Conv2dCausal, Dense, Dropout, Module, elu, tanh
from services.autodiff.optim import Adam, AdamState, adam_step
from services.autodiff.tensor import Tensor, concat, conv2d_causal, no_grad, stack

__all__ = [
    "Adam",
    "AdamState",
    "Conv2dCausal",
    "Dense",
    "Dropout",
    "LSTM",
    "Module",
    "Tensor",
    "adam_step",
    "concat",
    "conv2d_causal",
    "elu",
    "no_grad",
    "stack",
    "tanh",
]
