"""Small dense-tensor engine with reverse-mode differentiation.

Arrays are float64 numpy arrays. Operations are recorded on the active
:class:`Tape` only while one is open and at least one input requires a
gradient, so inference paths pay nothing for the graph::

    with Tape() as tape:
        loss = (w @ x).sum()
    grads = backward(tape, loss, [w])

Nodes are appended in creation order, which is already a topological
order; :func:`backward` walks the tape once in reverse and then frees it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

DTYPE = np.float64

# direct convolution below this many multiply-adds per output row, FFT above
FFT_CROSSOVER = 2048

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tape:
    """Ordered record of differentiable operations for one forward pass."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        for node in self.nodes:
            node._parents = ()
            node._backward = None
        self.nodes = []


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


class no_grad:
    """Suspend recording inside a tape context."""

    def __enter__(self):
        _tape_stack().append(None)

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, op={self.op})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class ComplexTensor:
    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise DimensionError(
                f"real part {self.real.shape} and imaginary part {self.imag.shape} differ"
            )

    @property
    def shape(self):
        return self.real.shape

    def numpy(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data

    @classmethod
    def from_numpy(cls, z, requires_grad=False) -> "ComplexTensor":
        z = np.asarray(z)
        return cls(Tensor(z.real.copy(), requires_grad), Tensor(z.imag.copy(), requires_grad))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    out.op = op
    out.name = None
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return _make(out, (a, b), bw, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _make(a.data**exponent, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def gelu(a: Tensor) -> Tensor:
    """tanh approximation."""
    a = as_tensor(a)
    x = a.data
    c = np.sqrt(2.0 / np.pi)
    u = c * (x + 0.044715 * x**3)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        du = c * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du),)

    return _make(out, (a,), bw, "gelu")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # exp of -|x| never overflows; capping |x| keeps it out of the subnormal range
    ex = np.exp(-np.minimum(np.abs(x), 700.0))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    # NaN propagates through max and +inf makes it non-finite
    if not np.all(np.isfinite(peak)):
        raise NumericError("softmax received non-finite input")
    out = np.subtract(a.data, peak)
    np.exp(out, out=out)
    out /= out.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


def complex_modulus(z: ComplexTensor) -> Tensor:
    """Elementwise ``|z|``; the subgradient at ``z = 0`` is taken as 0."""
    re, im = z.real, z.imag
    out = np.hypot(re.data, im.data)
    safe = np.where(out > 0, out, 1.0)
    zero = out == 0

    def bw(g):
        scale = np.where(zero, 0.0, g / safe)
        return scale * re.data, scale * im.data

    return _make(out, (re, im), bw, "modulus")


# ---------------------------------------------------------------- reductions


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out, dtype=DTYPE), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


# ---------------------------------------------------------------- shape ops


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def expand_dims(a: Tensor, axis: int) -> Tensor:
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def getitem(a: Tensor, index) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(a.data[index], dtype=DTYPE), (a,), bw, "getitem")


def take(a: Tensor, indices, axis: int = -1) -> Tensor:
    """Gather along ``axis``; the adjoint scatter-adds repeated indices."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim

    def bw(g):
        n = a.shape[axis]
        scatter = np.zeros((indices.size, n))
        np.add.at(scatter, (np.arange(indices.size), indices), 1.0)
        moved = np.moveaxis(g, axis, -1) @ scatter
        return (np.moveaxis(moved, -1, axis),)

    return _make(np.take(a.data, indices, axis=axis), (a,), bw, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % (tensors[0].ndim + 1)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    return _make(
        np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast"
    )


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


# ---------------------------------------------------------------- convolution


def _conv_valid_np(x: np.ndarray, h: np.ndarray, method: str = "auto") -> np.ndarray:
    """``np.convolve(x, h, 'valid')`` along the last axis, broadcasting the rest."""
    n, k = x.shape[-1], h.shape[-1]
    m = n - k + 1
    if m < 1:
        raise DimensionError(f"valid convolution needs len(x)={n} >= len(h)={k}")
    if method == "auto":
        method = "fft" if m * k > FFT_CROSSOVER else "direct"
    if method == "direct":
        win = np.lib.stride_tricks.sliding_window_view(x, k, axis=-1)
        return np.matmul(win, h[..., ::-1, None])[..., 0]
    size = n + k - 1
    nfft = 1 << (size - 1).bit_length()
    spec = np.fft.rfft(x, nfft) * np.fft.rfft(h, nfft)
    return np.fft.irfft(spec, nfft)[..., k - 1 : n]


def _conv_full_np(x: np.ndarray, h: np.ndarray, method: str = "auto") -> np.ndarray:
    k = h.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(k - 1, k - 1)]
    return _conv_valid_np(np.pad(x, pad), h, method)


def conv_valid(x: Tensor, h: Tensor, method: str = "auto") -> Tensor:
    """Valid-mode convolution along the last axis, differentiable in both inputs."""
    x, h = as_tensor(x), as_tensor(h)
    out = _conv_valid_np(x.data, h.data, method)

    def bw(g):
        gx = _conv_full_np(g, h.data[..., ::-1], method)
        gh = _conv_valid_np(x.data, g[..., ::-1], method)[..., ::-1]
        return _unbroadcast(gx, x.shape), _unbroadcast(gh, h.shape)

    return _make(out, (x, h), bw, "conv")


# ---------------------------------------------------------------- composites


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = mean(xc * xc, axis=-1, keepdims=True)
    return xc / sqrt(var + eps) * gain + bias


def mse(a: Tensor, b) -> Tensor:
    d = a - b
    return mean(d * d)


# ---------------------------------------------------------------- backward pass


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = (), free: bool = True) -> list:
    """Accumulate d(loss)/d(node) in reverse tape order.

    Returns one gradient array per entry of ``params`` (zeros for parameters
    the loss does not touch). Gradients also accumulate into ``param.grad``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    params = list(params)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
        if node is not loss:
            node.grad = None
    if free:
        tape.clear()
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def value_and_grad(fn: Callable[[], Tensor], params: Sequence[Tensor]):
    """Run ``fn`` on a fresh tape and return ``(loss_value, grads)``."""
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    grads = backward(tape, loss, params)
    return float(loss.data), [g.copy() for g in grads]


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    analytic: Sequence[np.ndarray] | None = None,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``fn`` recomputes the scalar loss from the current parameter values.
    The relative error of each coordinate uses
    ``max(|analytic|, |numeric|, 1e-8)`` as denominator.
    """
    if h <= 0:
        raise ContractError("finite-difference step must be positive")
    if analytic is None:
        _, analytic = value_and_grad(fn, params)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = np.asarray(ga).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn().data)
            flat[i] = orig - h
            fm = float(fn().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("objective is not finite near the check point")
            num = (fp - fm) / (2 * h)
            denom = max(abs(gflat[i]), abs(num), 1e-8)
            worst = max(worst, abs(gflat[i] - num) / denom)
    return worst
