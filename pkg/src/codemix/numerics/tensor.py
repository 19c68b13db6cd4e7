"""Dense tensors with a reverse-mode gradient tape, backed by numpy.

Values are float32 for training/inference; float64 is used for gradient
checks. Every op validates that its output is finite (NaN/Inf raises
NonFiniteError) so silent divergence cannot corrupt an experiment.

Gradients are accumulated into `Tensor.grad` by `Tensor.backward()`, which
walks the tape in reverse topological order. Wrap inference code in
`no_grad()` to skip tape construction entirely.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _assert_finite(arr: np.ndarray, what: str) -> None:
    # Summing is one fused pass; a non-finite element forces a non-finite sum.
    # (A finite-but-overflowing sum would also signal divergence, so treating
    # it as an error is acceptable.)
    with np.errstate(over="ignore", invalid="ignore"):
        total = arr.sum()
    if arr.size and not np.isfinite(total):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in {what}")
        raise NonFiniteError(f"overflow while checking {what}")


class Tensor:
    """A numpy array plus optional gradient buffer and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        _assert_finite(arr, "tensor data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse-mode sweep seeding this (scalar) tensor's gradient."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient "
                                 "requires a scalar tensor")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar. Scalars and ndarrays are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, 1.0 / other)
        raise TypeError("tensor/tensor division is not a tape primitive")

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return (f"Tensor(shape={self.shape}, dtype={self.data.dtype}, "
                f"requires_grad={self.requires_grad})")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Iterable[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    # Python scalars stay scalars so float32 tensors are not promoted.
    if isinstance(a, (int, float)):
        a, b = b, a
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        scalar = float(b)
        out = a.data + scalar

        def backward_scalar(g):
            if a.requires_grad:
                a.accumulate_grad(g)

        return _make(out, (a,), backward_scalar)

    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    if isinstance(a, (int, float)):
        a, b = b, a
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        scalar = float(b)
        out = a.data * scalar

        def backward_scalar(g):
            if a.requires_grad:
                a.accumulate_grad(g * scalar)

        return _make(out, (a,), backward_scalar)

    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    return _make(out, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out = a.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inv))

    return _make(out, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())

    return _make(out, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out)

    return _make(out, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return _make(out, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return _make(out, (a,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a) -> Tensor:
    """Smooth GELU (tanh form). Being C-infinity keeps central-difference
    gradient checks clean, unlike the ReLU kink."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x2)))
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        if a.requires_grad:
            sech2 = 1.0 - t * t
            d_inner = _GELU_C * (1.0 + 0.134145 * x2)
            a.accumulate_grad(g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner))

    return _make(out, (a,), backward)


def linear(x, w, b=None, transpose_w: bool = False) -> Tensor:
    """x @ w (+ b), with weight gradients computed as single 2-D GEMMs.

    x has shape (..., D); w is (D, F), or (F, D) with transpose_w=True
    (used for the tied output projection). b, when given, is (F,).
    """
    x, w = as_tensor(x), as_tensor(w)
    wd = w.data.T if transpose_w else w.data
    out = x.data @ wd
    if b is not None:
        b = as_tensor(b)
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            x.accumulate_grad((g2 @ wd.T).reshape(x.data.shape))
        if w.requires_grad:
            x2 = x.data.reshape(-1, x.data.shape[-1])
            gw = x2.T @ g2
            w.accumulate_grad(gw.T if transpose_w else gw)
        if b is not None and b.requires_grad:
            b.accumulate_grad(g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, backward)


def xlogy(x, y) -> Tensor:
    """x * log(y) with the convention that entries where x == 0 contribute 0
    to both the value and the gradients (subgradient at the boundary)."""
    x, y = as_tensor(x), as_tensor(y)
    nz = x.data != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logy = np.where(nz, np.log(np.where(nz, y.data, 1.0)), 0.0)
    out = x.data * logy

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(_unbroadcast(g * logy, x.data.shape))
        if y.requires_grad:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(nz, x.data / np.where(nz, y.data, 1.0), 0.0)
            y.accumulate_grad(_unbroadcast(g * ratio, y.data.shape))

    return _make(out, (x, y), backward)


def softmax(logits, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max subtraction along `axis`)."""
    a = as_tensor(logits)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (out * g).sum(axis=axis, keepdims=True)
            a.accumulate_grad(out * (g - dot))

    return _make(out, (a,), backward)


def log_softmax(logits, axis: int = -1) -> Tensor:
    a = as_tensor(logits)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        if a.requires_grad:
            p = np.exp(out)
            a.accumulate_grad(g - p * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis: gain * (x - mu) / sigma + bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            red = tuple(range(g.ndim - 1))
            gain.accumulate_grad((g * xhat).sum(axis=red))
        if bias.requires_grad:
            red = tuple(range(g.ndim - 1))
            bias.accumulate_grad(g.sum(axis=red))
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad((gh - m1 - xhat * m2) * inv)

    return _make(out, (x, gain, bias), backward)


def gather_rows(table, idx) -> Tensor:
    """table[idx]: embedding lookup. idx is an integer array; the output has
    shape idx.shape + table.shape[1:]."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    out = table.data[idx]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate_grad(gt)

    return _make(out, (table,), backward)


def take_along_last(a, idx) -> Tensor:
    """a[..., idx] picking one entry per row along the last axis."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            flat = ga.reshape(-1, ga.shape[-1])
            np.add.at(flat, (np.arange(flat.shape[0]), idx.ravel()), g.ravel())
            a.accumulate_grad(ga)

    return _make(out, (a,), backward)


def dropout(x, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return as_tensor(x)
    x = as_tensor(x)
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return mul(x, keep)
