"""Central finite-difference check of reverse-mode gradients"""

from typing import Callable, Dict, Sequence
import numpy as np

from services.autodiff.tensor import Tensor


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn().item()
        flat[i] = original - eps
        minus = fn().item()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a|| + ||n||, floor) over the whole tensor"""
    if not analytic.size:
        return 0.0
    scale = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), floor)
    return float(np.linalg.norm(analytic - numeric)) / scale


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6) -> Dict[int, float]:
    """Relative error per parameter between backward() and central differences.

    ``fn`` must rebuild the scalar from the current parameter values on each call.
    """
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    return {i: relative_error(a, numerical_gradient(fn, p, eps)) for i, (p, a) in enumerate(zip(params, analytic))}
