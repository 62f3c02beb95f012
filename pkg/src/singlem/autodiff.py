"""Dense float64 tensors with reverse-mode automatic differentiation.

The operator set is exactly what the encoder, decoder, and losses need:
elementwise arithmetic with numpy broadcasting, (batched) matmul, same-padded
1-D convolution, layer norm, ELU/GELU/softmax, attention, and Huber loss.
Forward values live in numpy arrays; each op attaches a closure that scatters
the upstream gradient into its parents. No op mutates its inputs.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import EvenKernel, HeadDivisibility, ShapeMismatch

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (frozen-weight inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    # -- basics --------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------

    def backward(self) -> None:
        """Reverse sweep from a scalar output, accumulating into .grad."""
        if self.size != 1:
            raise ShapeMismatch("backward() requires a scalar tensor")
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class Parameter:
    """A named learnable tensor; names form unique paths inside a model."""

    name: str
    tensor: Tensor
    trainable: bool = True


ParamDict = dict[str, Parameter]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn(out)
    return out


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(out):
        def run():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad, b.shape))
        return run

    return _make(data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(out):
        def run():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-out.grad, b.shape))
        return run

    return _make(data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(out):
        def run():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad * a.data, b.shape))
        return run

    return _make(data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    data = a.data * c

    def bw(out):
        def run():
            _accum(a, out.grad * c)
        return run

    return _make(data, (a,), bw)


# -- linear algebra -------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul operands must have at least 2 dimensions")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc

    def bw(out):
        def run():
            if a.requires_grad:
                ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
                _accum(a, _unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
                _accum(b, _unbroadcast(gb, b.shape))
        return run

    return _make(data, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bw(out):
        def run():
            _accum(a, out.grad.reshape(a.shape))
        return run

    return _make(data, (a,), bw)


def swap_last(a: Tensor) -> Tensor:
    """Transpose the trailing two axes."""
    a = as_tensor(a)
    data = np.swapaxes(a.data, -1, -2)

    def bw(out):
        def run():
            _accum(a, np.swapaxes(out.grad, -1, -2))
        return run

    return _make(data, (a,), bw)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index]

    def bw(out):
        def run():
            g = np.zeros_like(a.data)
            g[index] = out.grad
            _accum(a, g)
        return run

    return _make(data, (a,), bw)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bw(out):
        def run():
            offset = 0
            for t, size in zip(tensors, sizes):
                if t.requires_grad:
                    index = [slice(None)] * out.grad.ndim
                    index[axis] = slice(offset, offset + size)
                    _accum(t, out.grad[tuple(index)])
                offset += size
        return run

    return _make(data, tuple(tensors), bw)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Fancy-index rows along axis 0; gradient scatter-adds into duplicates."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]

    def bw(out):
        def run():
            g = np.zeros_like(a.data)
            np.add.at(g, idx, out.grad)
            _accum(a, g)
        return run

    return _make(data, (a,), bw)


def expand(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    data = np.broadcast_to(a.data, shape).copy()

    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape))
        return run

    return _make(data, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.asarray(a.data.sum())

    def bw(out):
        def run():
            _accum(a, np.full_like(a.data, float(out.grad)))
        return run

    return _make(data, (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.size)


# -- nonlinearities -------------------------------------------------------


def elu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    neg = np.expm1(a.data)
    data = np.where(a.data >= 0, a.data, neg)

    def bw(out):
        def run():
            _accum(a, out.grad * np.where(a.data >= 0, 1.0, neg + 1.0))
        return run

    return _make(data, (a,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """tanh-approximate GELU: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def bw(out):
        def run():
            d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (
                1.0 + 3.0 * _GELU_A * x**2)
            _accum(a, out.grad * d)
        return run

    return _make(data, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(out):
        def run():
            dot = (out.grad * data).sum(axis=axis, keepdims=True)
            _accum(a, data * (out.grad - dot))
        return run

    return _make(data, (a,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    data = y * gain.data + bias.data

    def bw(out):
        def run():
            if gain.requires_grad:
                _accum(gain, _unbroadcast(out.grad * y, gain.shape))
            if bias.requires_grad:
                _accum(bias, _unbroadcast(out.grad, bias.shape))
            if x.requires_grad:
                dy = out.grad * gain.data
                m1 = dy.mean(axis=-1, keepdims=True)
                m2 = (dy * y).mean(axis=-1, keepdims=True)
                _accum(x, inv * (dy - m1 - y * m2))
        return run

    return _make(data, (x, gain, bias), bw)


# -- convolution ----------------------------------------------------------


def conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Same-padded cross-correlation.

    x is (c_in, t) or (batch, c_in, t); w is (c_out, c_in, k) with odd k.
    Output time length equals input time length (zero padding).
    """
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 3:
        raise ShapeMismatch(f"conv weight must be 3-D, got {w.shape}")
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise EvenKernel(f"kernel length must be odd, got {k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or xd.shape[1] != c_in:
        raise ShapeMismatch(f"input {x.shape} incompatible with weight {w.shape}")
    batch, _, t = xd.shape
    pad = k // 2

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad)))
    # (batch, c_in, t, k) windows -> (batch, c_in*k, t) columns
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    col = win.transpose(0, 1, 3, 2).reshape(batch, c_in * k, t)
    w2 = w.data.reshape(c_out, c_in * k)
    data = np.matmul(w2, col)
    if squeeze:
        data = data[0]

    def bw(out):
        def run():
            g = out.grad[None] if squeeze else out.grad
            if w.requires_grad:
                gw = np.matmul(g, col.transpose(0, 2, 1)).sum(axis=0)
                _accum(w, gw.reshape(c_out, c_in, k))
            if x.requires_grad:
                gcol = np.matmul(w2.T, g).reshape(batch, c_in, k, t)
                gxp = np.zeros_like(xp)
                for j in range(k):
                    gxp[:, :, j:j + t] += gcol[:, :, j, :]
                gx = gxp[:, :, pad:pad + t]
                _accum(x, gx[0] if squeeze else gx)
        return run

    return _make(data, (x, w), bw)


# -- attention ------------------------------------------------------------


@dataclass
class AttentionWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multi_head_attention(x: Tensor, heads: int, w: AttentionWeights) -> Tensor:
    """Bidirectional scaled dot-product attention over the second-to-last axis.

    Accepts (n, d) or (batch, n, d); attention mixes only within each batch
    element. Scale is 1/sqrt(d/heads).
    """
    d = x.shape[-1]
    if d % heads != 0:
        raise HeadDivisibility(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads
    q = matmul(x, w.wq) + w.bq
    k = matmul(x, w.wk) + w.bk
    v = matmul(x, w.wv) + w.bv
    outs = []
    for h in range(heads):
        qh = narrow(q, -1, h * dh, dh)
        kh = narrow(k, -1, h * dh, dh)
        vh = narrow(v, -1, h * dh, dh)
        scores = scale(matmul(qh, swap_last(kh)), 1.0 / math.sqrt(dh))
        outs.append(matmul(softmax(scores, axis=-1), vh))
    return matmul(concat(outs, axis=-1), w.wo) + w.bo


# -- losses ---------------------------------------------------------------


def huber(pred: Tensor, target, delta: float = 1.0) -> Tensor:
    """Mean elementwise Huber penalty: quadratic within delta, linear beyond."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"huber shapes differ: {pred.shape} vs {target.shape}")
    e = pred.data - target.data
    abs_e = np.abs(e)
    elem = np.where(abs_e <= delta, 0.5 * e * e, delta * (abs_e - 0.5 * delta))
    n = max(pred.size, 1)
    data = np.asarray(elem.sum() / n)

    def bw(out):
        def run():
            g = float(out.grad) * np.clip(e, -delta, delta) / n
            if pred.requires_grad:
                _accum(pred, g)
            if target.requires_grad:
                _accum(target, -g)
        return run

    return _make(data, (pred, target), bw)
