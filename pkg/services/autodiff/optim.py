"""Adam optimiser"""

from dataclasses import dataclass, field
from typing import List, Sequence
import numpy as np

from core.exceptions import ShapeError
from services.autodiff.tensor import Tensor


@dataclass(eq=False)
class AdamState:
    """First and second moments per parameter plus the step counter"""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> List[np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter arrays and advances ``state``"""
    if len(params) != len(grads):
        raise ShapeError("Parameter and gradient lists differ in length", {"params": len(params), "grads": len(grads)})
    if not state.m:
        state.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p, dtype=np.float64) for p in params]

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(g) != np.shape(p):
            raise ShapeError("Gradient shape does not match its parameter", {"index": i, "param": np.shape(p), "grad": np.shape(g)})
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


class Adam:
    """Adam over a fixed list of parameter tensors; parameters without a gradient count as zero gradient"""

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-3):
        self.params = list(params)
        self.state = AdamState(learning_rate=learning_rate)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new_values = adam_step([p.data for p in self.params], grads, self.state)
        for p, values in zip(self.params, new_values):
            p.data = values

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
