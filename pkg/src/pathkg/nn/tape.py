"""A small reverse-mode tape over numpy arrays.

Every op computes its value eagerly and, while a :class:`Tape` is active and
some input requires a gradient, appends a node holding the backward rule.
Recording order is a valid topological order, so ``backward`` just walks the
node list in reverse.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return gather(self, idx)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable):
        self.out, self.inputs, self.backward = out, inputs, backward


class Tape:
    """Records ops between ``with tape:`` and replays them backwards."""

    _active: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        Tape._active.append(self)
        return self

    def __exit__(self, *exc):
        Tape._active.pop()

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._active[-1] if cls._active else None

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None):
        if seed is None:
            if loss.value.size != 1:
                raise ShapeError("backward needs a scalar loss or an explicit seed")
            seed = np.ones_like(loss.value)
        _accumulate(loss, seed)
        for node in reversed(self.nodes):
            if node.out.grad is None:
                continue
            grads = node.backward(node.out.grad)
            for tensor, g in zip(node.inputs, grads):
                if g is not None and tensor.requires_grad:
                    _accumulate(tensor, g)


@contextlib.contextmanager
def no_grad():
    """Suspend recording (used for evaluation-only forward passes)."""
    saved = Tape._active
    Tape._active = []
    try:
        yield
    finally:
        Tape._active = saved


def _accumulate(t: Tensor, g):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != t.value.shape:
        g = np.broadcast_to(g, t.value.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = Tape.current()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _record(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(value, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _record(out, (a,), lambda g: (g / (2.0 * np.where(out > 0, out, np.inf)),))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    return _record(np.log(x), (a,), lambda g: (g / x,))


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _record(a.value.sum(axis=axis), (a,), back)


def _scatter_rows(g: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``g`` into an ``n``-row array at ``index``."""
    flat = g.reshape(len(g), -1)
    mat = sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))), shape=(n, len(index)))
    return np.asarray(mat @ flat).reshape((n,) + g.shape[1:])


def gather(a, index) -> Tensor:
    """Row lookup ``a[index]``; backward scatters (sums) into the source rows."""
    a = as_tensor(a)
    index = np.asarray(index)
    if index.dtype == bool:
        index = np.flatnonzero(index)
    index = index.astype(np.int64, copy=False)
    n = a.shape[0]
    if len(index) and (index.min() < -n or index.max() >= n):
        raise IndexError(f"gather index outside [0, {n})")
    index = np.where(index < 0, index + n, index)
    return _record(a.value[index], (a,), lambda g: (_scatter_rows(g, index, n),))


def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Sum rows sharing a segment id; backward copies each segment's grad back."""
    a = as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if len(seg) != a.shape[0]:
        raise ShapeError("segment_sum needs one segment id per row")
    if len(seg) and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError(f"segment id outside [0, {num_segments})")
    value = _scatter_rows(a.value, seg, num_segments) if len(seg) else np.zeros((num_segments,) + a.shape[1:])
    return _record(value, (a,), lambda g: (g[seg],))


def segment_max(a, segment_ids, num_segments: int, fill: float = 0.0) -> Tensor:
    """Per-segment maximum; the gradient goes to the first arg-max row."""
    a = as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if len(seg) != a.shape[0]:
        raise ShapeError("segment_max needs one segment id per row")
    x = a.value
    out = np.full((num_segments,) + x.shape[1:], fill)
    if len(seg) == 0:
        return _record(out, (a,), lambda g: (np.zeros_like(x),))
    order = np.argsort(seg, kind="stable")
    s_sorted = seg[order]
    starts = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
    x_sorted = x[order]
    seg_max = np.maximum.reduceat(x_sorted, starts, axis=0)
    out[s_sorted[starts]] = seg_max
    # first position (in sorted order) attaining the max, per segment and column
    run = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(seg)]))
    pos = np.arange(len(seg)).reshape((-1,) + (1,) * (x.ndim - 1))
    cand = np.where(x_sorted == seg_max[run], pos, len(seg))
    first = np.minimum.reduceat(cand, starts, axis=0)
    src_rows = order[first]  # original row index of each arg-max

    def back(g):
        ga = np.zeros_like(x)
        gs = g[s_sorted[starts]]
        if x.ndim == 1:
            np.add.at(ga, src_rows, gs)
        else:
            cols = np.broadcast_to(np.arange(x.shape[1]), src_rows.shape)
            np.add.at(ga, (src_rows, cols), gs)
        return (ga,)

    return _record(out, (a,), back)


def index_add(base, idx, rows) -> Tensor:
    """``base`` with ``rows[i]`` added onto row ``idx[i]`` (indices unique)."""
    base, rows = as_tensor(base), as_tensor(rows)
    idx = np.asarray(idx, np.int64)
    value = base.value.copy()
    value[idx] += rows.value
    return _record(value, (base, rows), lambda g: (g, g[idx]))


def custom(value, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Record an op with a hand-written backward (used by the loss)."""
    return _record(value, [as_tensor(t) for t in inputs], backward)
