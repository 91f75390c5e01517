"""Reverse-mode automatic differentiation over dense numpy arrays.

Every differentiable operation produces a :class:`Tensor` that remembers its
parents and a closure mapping the upstream gradient to one gradient per
parent.  Nodes receive an id from a per-thread counter when they are created,
so the order of creation is the topological order and :func:`backward` simply
walks the reachable nodes by decreasing id.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "abs",
    "tanh",
    "sin",
    "relu",
    "leaky_relu",
    "log",
    "square",
    "sqrt",
    "clamp_min",
    "astype",
    "sum",
    "mean",
    "l1_norm",
    "frobenius_norm",
    "reshape",
    "transpose",
    "concat",
    "stack",
    "pad1d",
    "repeat_interleave",
    "avg_pool1d",
    "unfold1d",
]

LEAKY_SLOPE = 0.2

_local = threading.local()


def _state():
    if not hasattr(_local, "counter"):
        _local.counter = itertools.count()
        _local.grad_enabled = True
    return _local


def is_grad_enabled() -> bool:
    return _state().grad_enabled


@contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference mode)."""
    st = _state()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._id: int | None = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return _getitem(self, index)

    def sum(self, axes=None):
        return sum(self, axes)

    def mean(self, axes=None):
        return mean(self, axes)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def make_result(data: np.ndarray, parents: Iterable[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of an operation over ``parents``.

    The node is recorded only when grad mode is on and some parent needs a
    gradient; otherwise the result is a plain constant.
    """
    parents = tuple(parents)
    out = Tensor(data)
    st = _state()
    if st.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._id = next(st.counter)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward called on a tensor that does not require grad")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    seen = {id(loss)}
    while stack:
        t = stack.pop()
        if t._backward is not None:
            nodes[t._id] = t
            for p in t._parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.is_leaf:
        _accumulate(loss, pending.pop(id(loss)))
        return
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = pending.pop(id(node), None)
        if g is None:
            continue
        grads = node._backward(g)
        for p, pg in zip(node._parents, grads):
            if pg is None or not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.data.dtype)
            if p.is_leaf:
                _accumulate(p, pg)
            elif id(p) in pending:
                pending[id(p)] = pending[id(p)] + pg
            else:
                pending[id(p)] = pg


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad = leaf.grad + g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _binary_operands(a, b, op: str) -> tuple[Tensor, Tensor, tuple[int, ...]]:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    return a, b, shape


def add(a, b) -> Tensor:
    a, b, _ = _binary_operands(a, b, "add")
    return make_result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a, b) -> Tensor:
    a, b, _ = _binary_operands(a, b, "sub")
    return make_result(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a, b) -> Tensor:
    a, b, _ = _binary_operands(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b, _ = _binary_operands(a, b, "div")
    if np.any(b.data == 0):
        raise ZeroDivisionError(f"div: zero divisor at index {_first_index(b.data == 0)}")
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    # sign(0) == 0, so the gradient at the kink is 0
    return make_result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sin(a: Tensor) -> Tensor:
    return make_result(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope).astype(a.dtype)
    return make_result(a.data * scale, (a,), lambda g: (g * scale,))


def log(a: Tensor) -> Tensor:
    bad = a.data <= 0
    if np.any(bad):
        idx = _first_index(bad)
        raise ValueError(f"log: non-positive input {a.data[idx]!r} at index {idx}")
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a: Tensor) -> Tensor:
    return make_result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise ValueError(f"sqrt: negative input at index {_first_index(a.data < 0)}")
    out = np.sqrt(a.data)
    return make_result(out, (a,), lambda g: (g / (2.0 * out),))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); no gradient flows where the floor is active."""
    keep = a.data > floor
    out = np.where(keep, a.data, floor).astype(a.dtype)
    return make_result(out, (a,), lambda g: (g * keep,))


def astype(a: Tensor, dtype) -> Tensor:
    src = a.dtype
    return make_result(a.data.astype(dtype), (a,), lambda g: (g.astype(src),))


def _first_index(mask: np.ndarray):
    flat = int(np.flatnonzero(mask)[0])
    return np.unravel_index(flat, mask.shape) if mask.ndim > 1 else flat


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for tensor of rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ValueError(f"repeated axis in {axes}")
    return tuple(sorted(out))


def _expand(g: np.ndarray, shape, axes) -> np.ndarray:
    kept = [1 if i in axes else n for i, n in enumerate(shape)]
    return np.broadcast_to(g.reshape(kept), shape)


def sum(a: Tensor, axes=None) -> Tensor:  # noqa: A001
    ax = _norm_axes(axes, a.ndim)
    return make_result(a.data.sum(axis=ax), (a,), lambda g: (_expand(g, a.shape, ax),))


def mean(a: Tensor, axes=None) -> Tensor:
    ax = _norm_axes(axes, a.ndim)
    count = int(np.prod([a.shape[i] for i in ax])) if ax else 1
    if count == 0:
        raise ValueError("mean over an empty extent")
    return make_result(
        a.data.mean(axis=ax), (a,), lambda g: (_expand(g, a.shape, ax) / count,)
    )


def l1_norm(a: Tensor, axes=None) -> Tensor:
    return sum(abs(a), axes)


def frobenius_norm(a: Tensor, axes=None) -> Tensor:
    ax = _norm_axes(axes, a.ndim)
    out = np.sqrt((a.data * a.data).sum(axis=ax))

    def bw(g):
        safe = np.where(out > 0, out, 1.0)
        scale = np.where(out > 0, g / safe, 0.0)
        return (_expand(scale, a.shape, ax) * a.data,)

    return make_result(out, (a,), bw)


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def _getitem(a: Tensor, index) -> Tensor:
    parts = index if isinstance(index, tuple) else (index,)
    if not all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts):
        raise TypeError("only basic slicing is differentiable")
    out = np.asarray(a.data[index])

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_result(out.copy(), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        ax = axis % (t.ndim + 1)
        shape.insert(ax, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def pad1d(a: Tensor, left: int, right: int, mode: str = "zero") -> Tensor:
    """Pad the last axis. ``reflect`` mirrors about the edge samples."""
    if left < 0 or right < 0:
        raise ValueError("negative padding")
    n = a.shape[-1]
    if mode == "zero":
        widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
        out = np.pad(a.data, widths)
        return make_result(out, (a,), lambda g: (g[..., left:left + n],))
    if mode != "reflect":
        raise ValueError(f"unknown pad mode {mode!r}")
    if left >= n or right >= n:
        raise ValueError(f"reflect padding ({left}, {right}) needs a signal longer than {max(left, right)} samples, got {n}")
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    out = np.pad(a.data, widths, mode="reflect")

    def bw(g):
        gx = g[..., left:left + n].copy()
        if left:
            gx[..., 1:left + 1] += g[..., :left][..., ::-1]
        if right:
            gx[..., n - 1 - right:n - 1] += g[..., left + n:][..., ::-1]
        return (gx,)

    return make_result(out, (a,), bw)


def repeat_interleave(a: Tensor, factor: int) -> Tensor:
    """Duplicate each step of the last axis ``factor`` times."""
    if factor < 1:
        raise ValueError("repeat factor must be >= 1")
    out = np.repeat(a.data, factor, axis=-1)
    shape = a.shape
    return make_result(
        out, (a,), lambda g: (g.reshape(*shape, factor).sum(axis=-1),)
    )


def avg_pool1d(a: Tensor, kernel: int, stride: int) -> Tensor:
    n = a.shape[-1]
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be >= 1")
    if n < kernel:
        raise ValueError(f"avg_pool1d: input length {n} shorter than kernel {kernel}")
    win = np.lib.stride_tricks.sliding_window_view(a.data, kernel, axis=-1)[..., ::stride, :]
    out = win.mean(axis=-1)
    n_out = out.shape[-1]

    def bw(g):
        gx = np.zeros_like(a.data)
        share = g / kernel
        for j in range(kernel):
            gx[..., j:j + stride * (n_out - 1) + 1:stride] += share
        return (gx,)

    return make_result(out, (a,), bw)


def unfold1d(a: Tensor, frame_length: int, hop_length: int) -> Tensor:
    """Slice the last axis into overlapping frames: (..., T) -> (..., n, frame)."""
    n = a.shape[-1]
    if frame_length < 1 or hop_length < 1:
        raise ValueError("frame_length and hop_length must be >= 1")
    if n < frame_length:
        raise ValueError(f"signal of length {n} is shorter than one frame ({frame_length})")
    view = np.lib.stride_tricks.sliding_window_view(a.data, frame_length, axis=-1)[..., ::hop_length, :]
    n_frames = view.shape[-2]

    def bw(g):
        gx = np.zeros_like(a.data)
        if n_frames <= frame_length:
            for i in range(n_frames):
                gx[..., i * hop_length:i * hop_length + frame_length] += g[..., i, :]
        else:
            for j in range(frame_length):
                gx[..., j:j + hop_length * (n_frames - 1) + 1:hop_length] += g[..., :, j]
        return (gx,)

    return make_result(np.ascontiguousarray(view), (a,), bw)
