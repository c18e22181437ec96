"""Dense tensors with tape-based reverse-mode autodiff and symmetric int8 kernels.

Every differentiable op appends a backward closure to the active :class:`Tape`.
``backward`` replays the tape in reverse and consumes it.  Arrays are float32
unless a caller explicitly builds float64 tensors (gradient checking does).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float32
QMAX = 127


class Tape:
    """Ordered record of differentiable operations since the last reset."""

    def __init__(self) -> None:
        self.entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self.enabled = True

    def record(self, out: "Tensor", backward_fn: Callable[[np.ndarray], None]) -> None:
        self.entries.append((out, backward_fn))

    def reset(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


_TAPE = Tape()


def get_tape() -> Tape:
    return _TAPE


class no_grad:
    """Context manager that stops recording onto the tape."""

    def __enter__(self) -> None:
        self._prev = _TAPE.enabled
        _TAPE.enabled = False

    def __exit__(self, *exc) -> None:
        _TAPE.enabled = self._prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = g.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, tuple(range(self.ndim))[::-1])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _tracking(*ts: Tensor) -> bool:
    return _TAPE.enabled and any(t.requires_grad for t in ts)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if _tracking(*parents):
        out.requires_grad = True
        _TAPE.record(out, backward_fn)
    return out


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def bw(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: a._accumulate(-g))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul; ``b`` may be 2-D and is then broadcast over batch dims."""

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: a._accumulate(g * mask))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    # wide accumulation keeps the denominator independent of trailing zeros
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(e.dtype)
    s = e / denom

    def bw(g):
        a._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        a._accumulate(g - s * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if x.requires_grad:
            gx = g * gamma.data
            n = x.shape[-1]
            dx = inv / n * (n * gx - gx.sum(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
            x._accumulate(dx)

    return _make(out.astype(x.data.dtype, copy=False), (x, gamma, beta), bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def transpose(a: Tensor, axes: tuple[int, ...] = ()) -> Tensor:
    axes = tuple(axes) if axes else tuple(range(a.ndim))[::-1]
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: a._accumulate(g.transpose(inv)))


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(a.data[idx], (a,), bw)


def take_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup: ``table[ids]`` with scatter-add backward."""
    ids = np.asarray(ids)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(full)

    return _make(table.data[ids], (table,), bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between integer ``labels`` and ``logits`` (N, C)."""
    labels = np.asarray(labels)
    logp = log_softmax(logits, axis=-1)
    n = logits.shape[0]
    picked = getitem(logp, (np.arange(n), labels))
    return mul(tsum(picked), -1.0 / n)


def soft_cross_entropy(teacher_logits: Tensor, student_logits: Tensor) -> Tensor:
    """``-sum softmax(t) * log_softmax(s)`` averaged over the batch (T = 1)."""
    if teacher_logits.shape != student_logits.shape:
        raise ValueError(f"logit shapes differ: {teacher_logits.shape} vs {student_logits.shape}")
    t = teacher_logits.data
    p = np.exp(t - t.max(axis=-1, keepdims=True))
    p /= p.sum(axis=-1, keepdims=True)
    logq = log_softmax(student_logits, axis=-1)
    n = student_logits.shape[0]
    return mul(tsum(mul(logq, Tensor(p.astype(logq.data.dtype)))), -1.0 / n)


def mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    d = add(a, neg(b))
    return tmean(mul(d, d))


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every tensor that fed ``loss``; consumes the tape."""
    if loss.data.size != 1:
        raise ValueError("backward() needs a scalar loss")
    if not _TAPE.entries:
        raise RuntimeError("backward() called on an empty tape")
    loss.grad = np.ones_like(loss.data)
    # intermediate grads live on the op outputs and are dropped afterwards
    for out, fn in reversed(_TAPE.entries):
        if out.grad is not None:
            fn(out.grad)
    for out, _ in _TAPE.entries:
        if out is not loss:
            out.grad = None
    _TAPE.reset()


# -------------------------------------------------------------- quantization


@dataclass(frozen=True)
class QuantizedTensor:
    qdata: np.ndarray  # int8
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.qdata.shape

    @property
    def T(self) -> "QuantizedTensor":
        """Swap the last two axes."""
        return QuantizedTensor(np.ascontiguousarray(np.swapaxes(self.qdata, -1, -2)), self.scale)

    def dequantize(self) -> np.ndarray:
        return self.qdata.astype(DTYPE) * DTYPE(self.scale)


def quantize_with_scale(x: np.ndarray, scale: float) -> QuantizedTensor:
    q = np.clip(np.rint(np.asarray(x, dtype=np.float64) / scale), -QMAX, QMAX).astype(np.int8)
    return QuantizedTensor(q, float(scale))


def symmetric_scale(x: np.ndarray) -> float:
    m = float(np.max(np.abs(x))) if np.size(x) else 0.0
    return m / QMAX if m > 0 else 1.0


def quantize(t: Tensor | np.ndarray) -> QuantizedTensor:
    x = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    return quantize_with_scale(x, symmetric_scale(x))


def dequantize(q: QuantizedTensor) -> Tensor:
    return Tensor(q.dequantize())


def int_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer matmul with int32 accumulation."""
    return np.matmul(a.astype(np.int32), b.astype(np.int32))


def qmatmul(a: QuantizedTensor, b: QuantizedTensor) -> Tensor:
    ka = a.shape[-1]
    kb = b.shape[-2] if len(b.shape) > 1 else b.shape[0]
    if ka != kb:
        raise ValueError(f"qmatmul inner dimensions differ: {a.shape} @ {b.shape}")
    acc = int_matmul(a.qdata, b.qdata)
    return Tensor((acc.astype(np.float64) * (a.scale * b.scale)).astype(DTYPE))
