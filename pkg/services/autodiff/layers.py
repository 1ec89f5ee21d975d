"""Parameter containers and the layers the factor network is built from"""

from typing import Dict, Iterator, List, Optional, Tuple
import numpy as np

from core.exceptions import ShapeError
from services.autodiff.tensor import Tensor, concat, conv2d_causal, dropout, stack


def parameter(values: np.ndarray) -> Tensor:
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


class Module:
    """Base class: parameters are Tensor attributes, sub-modules are Module attributes"""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise ShapeError("Checkpoint is missing parameters", {"missing": sorted(missing)})
        for name, p in params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.shape:
                raise ShapeError(
                    "Checkpoint tensor has the wrong shape",
                    {"name": name, "expected": p.shape, "found": values.shape},
                )
            p.data = values.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for value in vars(self).values():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Dense(Module):
    """y = x W + b"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = parameter(glorot_uniform(rng, (in_features, out_features), in_features, out_features))
        self.bias = parameter(np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError("Dense input width mismatch", {"x": x.shape, "weight": self.weight.shape})
        return x @ self.weight + self.bias


class Conv2dCausal(Module):
    """Convolution layer over (..., T, W, C_in), causal in T and valid in W"""

    def __init__(self, height: int, width: int, in_channels: int, out_channels: int, rng: np.random.Generator):
        fan_in = height * width * in_channels
        fan_out = height * width * out_channels
        self.kernel = parameter(
            glorot_uniform(rng, (height, width, in_channels, out_channels), fan_in, fan_out)
        )
        self.bias = parameter(np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_causal(x, self.kernel, self.bias)


class LSTM(Module):
    """Single-layer LSTM over (T, D) or (B, T, D), zero initial state.

    Gate order in the packed weights is input, forget, cell, output.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.hidden_size = hidden_size
        H = hidden_size
        self.W = parameter(glorot_uniform(rng, (input_size, 4 * H), input_size, 4 * H))
        self.U = parameter(np.concatenate([orthogonal(rng, H, H) for _ in range(4)], axis=1))
        bias = np.zeros(4 * H)
        bias[H:2 * H] = 1.0
        self.b = parameter(bias)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim not in (2, 3) or x.shape[-1] != self.W.shape[0]:
            raise ShapeError("LSTM expects (T, D) or (B, T, D)", {"x": x.shape, "D": self.W.shape[0]})
        H = self.hidden_size
        T = x.shape[-2]
        batch = x.shape[:-2]

        projected = x @ self.W + self.b
        h = Tensor(np.zeros(batch + (H,)))
        c = Tensor(np.zeros(batch + (H,)))
        outputs = []
        for t in range(T):
            z = projected[..., t, :] + h @ self.U
            i = z[..., :H].sigmoid()
            f = z[..., H:2 * H].sigmoid()
            g = z[..., 2 * H:3 * H].tanh()
            o = z[..., 3 * H:].sigmoid()
            c = f * c + i * g
            h = o * c.tanh()
            outputs.append(h)
        return stack(outputs, axis=-2)


class Dropout(Module):
    """Inverted dropout drawing its mask from a seeded generator"""

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        return dropout(x, self.rate, self.rng, training=self.training)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    return x.elu(alpha)


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def sum_abs(x: Tensor, axis: Optional[int] = None) -> Tensor:
    return x.abs().sum(axis=axis)


def flatten_last(x: Tensor, n: int = 2) -> Tensor:
    """Merge the last ``n`` axes"""
    return x.reshape(x.shape[:-n] + (int(np.prod(x.shape[-n:])),))


__all__ = [
    "Conv2dCausal",
    "Dense",
    "Dropout",
    "LSTM",
    "Module",
    "concat",
    "elu",
    "flatten_last",
    "glorot_uniform",
    "orthogonal",
    "parameter",
    "sum_abs",
    "tanh",
]
