"""Reverse-mode automatic differentiation over numpy arrays"""

from contextlib import contextmanager
import threading
from typing import Callable, Iterator, Optional, Sequence, Tuple, Union
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.exceptions import ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

_grad_mode = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (per thread)"""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """float64 array with a gradient slot and the closure that back-propagates into its parents"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: Tuple["Tensor", ...] = (),
        _op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._op = _op
        self._backward: Callable[[], None] = lambda: None

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.shape)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    @staticmethod
    def _make(data: np.ndarray, parents: Tuple["Tensor", ...], op: str) -> "Tensor":
        track = grad_enabled() and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=track, _parents=parents if track else (), _op=op)

    def backward(self, grad: Optional[np.ndarray] = None):
        """Accumulate d(self)/d(leaf) into every leaf that requires a gradient"""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar", {"shape": self.shape})
            grad = np.ones_like(self.data)

        # iterative post-order so long recurrences do not hit the recursion limit
        order = []
        visited = set()
        pending = [(self, False)]
        while pending:
            node, expanded = pending.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            pending.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    pending.append((parent, False))

        self.grad = np.asarray(grad, dtype=np.float64) + (self.grad if self.grad is not None else 0.0)
        for node in reversed(order):
            # constants reach the order as parents but never receive a gradient
            if node.grad is None:
                continue
            node._backward()

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor._make(self.data + other.data, (self, other), "add")

        def _backward():
            self._accumulate(out.grad)
            other._accumulate(out.grad)

        out._backward = _backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor._make(-self.data, (self,), "neg")

        def _backward():
            self._accumulate(-out.grad)

        out._backward = _backward
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor._make(self.data * other.data, (self, other), "mul")

        def _backward():
            self._accumulate(out.grad * other.data)
            other._accumulate(out.grad * self.data)

        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor._make(self.data / other.data, (self, other), "div")

        def _backward():
            self._accumulate(out.grad / other.data)
            other._accumulate(-out.grad * self.data / (other.data ** 2))

        out._backward = _backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        out = Tensor._make(self.data ** exponent, (self,), "pow")

        def _backward():
            self._accumulate(out.grad * exponent * self.data ** (exponent - 1))

        out._backward = _backward
        return out

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, as_tensor(other))

    def __getitem__(self, index) -> "Tensor":
        out = Tensor._make(self.data[index], (self,), "getitem")

        def _backward():
            grad = np.zeros_like(self.data)
            if _is_basic_index(index):
                grad[index] += out.grad
            else:
                np.add.at(grad, index, out.grad)
            self._accumulate(grad)

        out._backward = _backward
        return out

    # -- shape ---------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._make(self.data.reshape(shape), (self,), "reshape")

        def _backward():
            self._accumulate(out.grad.reshape(self.shape))

        out._backward = _backward
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        out = Tensor._make(self.data.transpose(axes), (self,), "transpose")

        def _backward():
            self._accumulate(out.grad.transpose(inverse))

        out._backward = _backward
        return out

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def _backward():
            grad = out.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accumulate(np.broadcast_to(grad, self.shape))

        out._backward = _backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def std(self, axis=None, keepdims: bool = False) -> "Tensor":
        """Unbiased standard deviation"""
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        if count < 2:
            raise ShapeError("std needs at least two elements", {"shape": self.shape})
        centred = self - self.mean(axis=axis, keepdims=True)
        variance = (centred * centred).sum(axis=axis, keepdims=keepdims) / float(count - 1)
        return variance.sqrt()

    # -- elementwise ---------------------------------------------------------

    def abs(self) -> "Tensor":
        out = Tensor._make(np.abs(self.data), (self,), "abs")

        def _backward():
            self._accumulate(out.grad * np.sign(self.data))

        out._backward = _backward
        return out

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        out = Tensor._make(value, (self,), "sqrt")

        def _backward():
            with np.errstate(divide="ignore", invalid="ignore"):
                self._accumulate(out.grad * 0.5 / value)

        out._backward = _backward
        return out

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = Tensor._make(value, (self,), "exp")

        def _backward():
            self._accumulate(out.grad * value)

        out._backward = _backward
        return out

    def tanh(self) -> "Tensor":
        value = np.tanh(self.data)
        out = Tensor._make(value, (self,), "tanh")

        def _backward():
            self._accumulate(out.grad * (1.0 - value ** 2))

        out._backward = _backward
        return out

    def sigmoid(self) -> "Tensor":
        value = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        out = Tensor._make(value, (self,), "sigmoid")

        def _backward():
            self._accumulate(out.grad * value * (1.0 - value))

        out._backward = _backward
        return out

    def elu(self, alpha: float = 1.0) -> "Tensor":
        positive = self.data > 0
        negative_part = alpha * np.expm1(np.minimum(self.data, 0.0))
        out = Tensor._make(np.where(positive, self.data, negative_part), (self,), "elu")

        def _backward():
            self._accumulate(out.grad * np.where(positive, 1.0, negative_part + alpha))

        out._backward = _backward
        return out


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., k) @ (k, m) -> (..., m)"""
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul expects (..., k) @ (k, m)", {"a": a.shape, "b": b.shape})
    out = Tensor._make(a.data @ b.data, (a, b), "matmul")

    def _backward():
        a._accumulate(out.grad @ b.data.T)
        k, m = b.shape
        b._accumulate(a.data.reshape(-1, k).T @ out.grad.reshape(-1, m))

    out._backward = _backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._make(data, tuple(tensors), "concat")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward():
        for t, grad in zip(tensors, np.split(out.grad, bounds, axis=axis)):
            t._accumulate(grad)

    out._backward = _backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)
    out = Tensor._make(data, tuple(tensors), "stack")

    def _backward():
        for i, t in enumerate(tensors):
            t._accumulate(np.take(out.grad, i, axis=axis))

    out._backward = _backward
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0"""
    if not training or rate <= 0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor._make(x.data * keep, (x,), "dropout")

    def _backward():
        x._accumulate(out.grad * keep)

    out._backward = _backward
    return out


def conv2d_causal(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """2-D convolution, zero-padded at the start of time and valid across width.

    x: (..., T, W, C_in), kernel: (h, w, C_in, C_out) -> (..., T, W - w + 1, C_out).
    Output row t reads input rows t-h+1..t only.
    """
    if x.ndim < 3 or kernel.ndim != 4:
        raise ShapeError("conv2d_causal expects x (..., T, W, C_in) and kernel (h, w, C_in, C_out)",
                         {"x": x.shape, "kernel": kernel.shape})
    h, w, c_in, c_out = kernel.shape
    T, W, channels = x.shape[-3:]
    if channels != c_in:
        raise ShapeError("Input channels do not match the kernel", {"x": x.shape, "kernel": kernel.shape})
    if w > W:
        raise ShapeError("Kernel is wider than the input", {"x": x.shape, "kernel": kernel.shape})
    width = W - w + 1

    pad = [(0, 0)] * (x.ndim - 3) + [(h - 1, 0), (0, 0), (0, 0)]
    padded = np.pad(x.data, pad)
    # (..., T, W', C_in, h, w)
    windows = sliding_window_view(padded, (h, w), axis=(-3, -2))
    data = np.einsum("...tvchk,hkco->...tvo", windows, kernel.data, optimize=True)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    if bias is not None:
        data = data + bias.data
    out = Tensor._make(data, parents, "conv2d_causal")

    def _backward():
        grad = out.grad
        if kernel.requires_grad:
            kernel._accumulate(np.einsum("...tvchk,...tvo->hkco", windows, grad, optimize=True))
        if bias is not None and bias.requires_grad:
            bias._accumulate(grad.reshape(-1, c_out).sum(axis=0))
        if x.requires_grad:
            grad_padded = np.zeros_like(padded)
            for i in range(h):
                for j in range(w):
                    grad_padded[..., i:i + T, j:j + width, :] += grad @ kernel.data[i, j].T
            x._accumulate(grad_padded[..., h - 1:, :, :])

    out._backward = _backward
    return out
