"""Dense float64 tensors with reverse-mode differentiation.

This is the single place where gradients are defined.  The primitive set is
closed: ``matmul``, ``add``, ``sub``, ``mul``, ``concat``, ``slice_``,
``transpose``, ``reshape``, ``row_softmax``, ``pointwise``, ``sum_``,
``mean_``, ``gather_rows``, ``clip`` and ``log_loss``.  Every model operation
in the package composes from these, so the per-primitive finite-difference
suite covers the whole model.

Recording works through a context-managed :class:`Tape`: while a tape is
active, every primitive appends (op name, output, pullbacks) to it, and
:func:`backward` replays the list in exact reverse order.  With no active
tape the primitives behave as plain numpy wrappers, which is the inference
fast path.

Shapes are rank-polymorphic in the numpy broadcasting sense.  All the model
code relies on this: the same forward pass runs on one instance (``(m, d)``
states) and on a batch (``(b, m, d)`` states).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import InvariantError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "ParameterStore",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "concat",
    "slice_",
    "transpose",
    "reshape",
    "row_softmax",
    "pointwise",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "sum_",
    "mean_",
    "gather_rows",
    "clip",
    "log_loss",
    "POINTWISE_FNS",
    "DEFAULT_LEAKY_SLOPE",
    "PROB_CLAMP",
]

DEFAULT_LEAKY_SLOPE = 0.01

# Predicted probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] inside
# log_loss so the loss stays finite.
PROB_CLAMP = 1e-7


class Tensor:
    """Immutable-by-convention float64 array plus a gradient slot.

    ``grad`` is ``None`` until :func:`backward` writes into it.  Entries are
    guaranteed finite: every primitive validates its output.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvariantError("tensor initialised with non-finite values")
        self.data = arr
        self.grad = None

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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


_ACTIVE_TAPE: "Tape | None" = None

# A pullback maps the output gradient to one input's gradient contribution.
Pullback = tuple[Tensor, Callable[[np.ndarray], np.ndarray]]


class Tape:
    """Ordered record of executed primitives, single-owner, not reentrant."""

    __slots__ = ("_ops",)

    def __init__(self):
        self._ops: list[tuple[str, Tensor, list[Pullback]]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise InvariantError("a Tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False


class ParameterStore:
    """Named trainable tensors, each paired with its gradient slot.

    Insertion order is the canonical enumeration order used by checkpoints
    and parameter counting.  Gradients live on the tensors themselves
    (``tensor.grad``); the store only adds bookkeeping.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise InvariantError(f"duplicate parameter name {name!r}")
        t = Tensor(values)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for t in self._params.values())

    def grad(self, name: str) -> np.ndarray:
        g = self._params[name].grad
        if g is None:
            raise InvariantError(f"parameter {name!r} has no gradient; run backward first")
        return g

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            missing = set(self._params) - set(values)
            extra = set(values) - set(self._params)
            raise InvariantError(
                f"snapshot does not match store (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for name, arr in values.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ShapeError(
                    f"snapshot shape {arr.shape} for {name!r} does not match {t.data.shape}"
                )
            t.data = np.asarray(arr, dtype=np.float64).copy()
            t.grad = None


def _emit(name: str, out_data: np.ndarray, pullbacks: list[Pullback]) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise InvariantError(f"op '{name}' produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._ops.append((name, out, pullbacks))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros(t.data.shape)
    t.grad += g


def backward(loss: Tensor, record: Tape, store: ParameterStore | None = None) -> None:
    """Propagate d(loss)/d(tensor) through ``record`` in reverse order.

    Gradients accumulate into ``tensor.grad`` slots; call
    ``store.zero_grads()`` first unless accumulation is intended.  When a
    store is given, parameters untouched by this forward pass get explicit
    zero gradients so optimizers never see ``None``.
    """
    if loss.data.shape != ():
        raise InvariantError(f"loss must be a scalar tensor, got shape {loss.data.shape}")
    loss.grad = np.array(1.0)
    for name, out, pullbacks in reversed(record._ops):
        g = out.grad
        if g is None:
            continue  # this op never fed the loss
        if not np.all(np.isfinite(g)):
            raise InvariantError(f"non-finite gradient reached op '{name}'")
        for tensor, pull in pullbacks:
            _accumulate(tensor, pull(g))
    if store is not None:
        for t in store.tensors():
            if t.grad is None:
                t.grad = np.zeros(t.data.shape)


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy stacking semantics (operands must be >= 2-D)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def pull_a(g):
        return _unbroadcast(g @ _swap(bd), ad.shape)

    def pull_b(g):
        return _unbroadcast(_swap(ad) @ g, bd.shape)

    return _emit("matmul", out, [(a, pull_a), (b, pull_b)])


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with broadcasting (also covers bias rows and scalars)."""
    out = a.data + b.data
    return _emit(
        "add",
        out,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ],
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _emit(
        "sub",
        out,
        [
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(-g, b.data.shape)),
        ],
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with broadcasting."""
    ad, bd = a.data, b.data
    out = ad * bd
    return _emit(
        "mul",
        out,
        [
            (a, lambda g: _unbroadcast(g * bd, ad.shape)),
            (b, lambda g: _unbroadcast(g * ad, bd.shape)),
        ],
    )


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along ``axis``; the gradient splits back at the seams."""
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis if axis >= 0 else out.ndim + axis
    pullbacks: list[Pullback] = []
    offset = 0
    for t in tensors:
        width = t.data.shape[ax]
        window = tuple(
            slice(offset, offset + width) if i == ax else slice(None) for i in range(out.ndim)
        )
        pullbacks.append((t, lambda g, w=window: g[w]))
        offset += width
    return _emit("concat", out, pullbacks)


def slice_(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous window along one axis (keeps rank)."""
    ax = axis if axis >= 0 else x.ndim + axis
    if not (0 <= ax < x.ndim):
        raise ShapeError(f"slice axis {axis} out of range for shape {x.shape}")
    window = tuple(slice(start, stop) if i == ax else slice(None) for i in range(x.ndim))
    out = x.data[window]

    def pull(g, w=window, shape=x.data.shape):
        gx = np.zeros(shape)
        gx[w] = g
        return gx

    return _emit("slice", out, [(x, pull)])


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError(f"transpose needs a >=2-D tensor, got shape {x.shape}")
    return _emit("transpose", _swap(x.data), [(x, lambda g: _swap(g))])


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    return _emit("reshape", out, [(x, lambda g: g.reshape(x.data.shape))])


def row_softmax(x: Tensor, mask: np.ndarray | Tensor | None = None) -> Tensor:
    """Softmax over the last axis, numerically stabilised by max-subtraction.

    ``mask`` (broadcastable boolean, True = keep) excludes entries: they come
    out exactly 0 and receive zero gradient.  Every row must keep at least
    one entry.
    """
    xd = x.data
    if xd.ndim < 1 or xd.shape[-1] == 0:
        raise ShapeError(f"row_softmax needs a non-empty last axis, got shape {xd.shape}")
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
        m = np.broadcast_to(m.astype(bool), xd.shape)
        if not m.any(axis=-1).all():
            raise InvariantError("row_softmax: some row is fully masked")
        shifted = np.where(m, xd, -np.inf)
    else:
        shifted = xd
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)  # masked slots: exp(-inf) == 0 exactly
    y = e / e.sum(axis=-1, keepdims=True)

    def pull(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return y * (g - inner)

    return _emit("row_softmax", y, [(x, pull)])


def _pw_sigmoid(x):
    y = expit(x)
    return y, lambda g: g * y * (1.0 - y)


def _pw_tanh(x):
    y = np.tanh(x)
    return y, lambda g: g * (1.0 - y * y)


def _pw_relu(x):
    y = np.maximum(x, 0.0)
    return y, lambda g: g * (x > 0.0)


def _pw_leaky_relu(x, slope):
    y = np.where(x >= 0.0, x, slope * x)
    return y, lambda g: g * np.where(x >= 0.0, 1.0, slope)


POINTWISE_FNS = ("sigmoid", "tanh", "relu", "leaky_relu")


def pointwise(fn: str, x: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    """Elementwise nonlinearity; ``slope`` only applies to leaky_relu."""
    if fn == "sigmoid":
        out, pull = _pw_sigmoid(x.data)
    elif fn == "tanh":
        out, pull = _pw_tanh(x.data)
    elif fn == "relu":
        out, pull = _pw_relu(x.data)
    elif fn == "leaky_relu":
        out, pull = _pw_leaky_relu(x.data, slope)
    else:
        raise ShapeError(f"unknown pointwise fn {fn!r}; expected one of {POINTWISE_FNS}")
    return _emit(f"pointwise:{fn}", out, [(x, pull)])


def sigmoid(x: Tensor) -> Tensor:
    return pointwise("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return pointwise("tanh", x)


def relu(x: Tensor) -> Tensor:
    return pointwise("relu", x)


def leaky_relu(x: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    return pointwise("leaky_relu", x, slope)


def _normalize_axes(axis, ndim: int) -> tuple[int, ...] | None:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a if a >= 0 else ndim + a for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def pull(g, shape=x.data.shape):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, shape).copy()

    return _emit("sum", np.asarray(out), [(x, pull)])


def mean_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.mean(axis=axes, keepdims=keepdims)
    if axes is None:
        count = x.data.size
    else:
        count = int(np.prod([x.data.shape[a] for a in axes]))

    def pull(g, shape=x.data.shape):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, shape) / count

    return _emit("mean", np.asarray(out), [(x, pull)])


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of ``table`` by integer index; duplicates accumulate grads.

    ``indices`` may have any shape; the output has shape
    ``indices.shape + table.shape[1:]``.
    """
    if table.ndim < 2:
        raise ShapeError(f"gather_rows needs a >=2-D table, got shape {table.shape}")
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"gather_rows index out of range [0, {table.shape[0]}): min={idx.min()}, max={idx.max()}"
        )
    out = table.data[idx]

    def pull(g):
        gt = np.zeros(table.data.shape)
        np.add.at(gt, idx, g)
        return gt

    return _emit("gather_rows", out, [(table, pull)])


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradients pass through strictly inside, 0 outside."""
    xd = x.data
    out = np.clip(xd, lo, hi)

    def pull(g):
        return g * ((xd > lo) & (xd < hi))

    return _emit("clip", out, [(x, pull)])


def log_loss(probs: Tensor, labels: np.ndarray, clamp: float = PROB_CLAMP) -> Tensor:
    """Mean binary cross-entropy, with probabilities clamped to keep it finite.

    Clamped entries get zero gradient (the clamp is flat there); probabilities
    produced by a sigmoid only hit the clamp deep in saturation, where the
    gradient is negligible anyway.
    """
    y = np.asarray(labels, dtype=np.float64)
    p = probs.data
    if p.shape != y.shape:
        raise ShapeError(f"log_loss shapes differ: probs {p.shape} vs labels {y.shape}")
    if p.size == 0:
        raise InvariantError("log_loss of an empty batch")
    clamped = np.clip(p, clamp, 1.0 - clamp)
    n = p.size
    out = -(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped)).sum() / n

    def pull(g):
        inside = (p > clamp) & (p < 1.0 - clamp)
        dp = -(y / clamped - (1.0 - y) / (1.0 - clamped)) / n
        return g * np.where(inside, dp, 0.0)

    return _emit("log_loss", np.asarray(out), [(probs, pull)])
