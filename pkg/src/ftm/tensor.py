"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations on :class:`Tensor` objects are recorded on the active :class:`Tape`
(a Wengert list) whenever at least one operand is tracked, i.e. it is a
parameter (``requires_grad=True``) or the output of an earlier recorded
operation.  Without an active tape every operation is a plain numpy forward
pass, which is what evaluation code relies on.

    >>> x = Tensor([1.0, 2.0], name="x", requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (x * x).sum()
    >>> backprop(tape, loss)["x"]
    array([2., 4.])
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, NonDeterminismError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "Entry",
    "apply",
    "backprop",
    "finite_diff_check",
    "active_tape",
    "add",
    "sub",
    "mul",
    "matmul",
    "concat",
    "take",
    "getslice",
    "reshape",
    "transpose",
    "relu",
    "sigmoid",
    "log",
    "log_sigmoid",
    "cos",
    "softmax",
    "tsum",
    "tmean",
]

_state = threading.local()


def active_tape() -> Tape | None:
    return getattr(_state, "tape", None)


class Tensor:
    """A float64 array, optionally a named trainable leaf or a recorded node."""

    __slots__ = ("data", "name", "requires_grad", "_tape", "_handle")
    __array_ufunc__ = None

    def __init__(self, data, name: str | None = None, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.name = name
        self.requires_grad = requires_grad
        self._tape: Tape | None = None
        self._handle: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def node_id(self) -> int | None:
        return self._handle

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self.shape)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # arithmetic sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        if isinstance(key, (np.ndarray, list)):
            return take(self, np.asarray(key))
        return getslice(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _not_scalar(shape):
    raise ShapeError(f"expected a single-element tensor, got shape {shape}")


@dataclass
class Entry:
    """One primitive application on a tape."""

    op: str
    inputs: tuple[int, ...]
    output: int
    attrs: dict[str, Any]
    saved: Any = None


@dataclass
class Tape:
    """Computation record: leaf values plus a topologically ordered list of entries."""

    entries: list[Entry] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    leaves: dict[int, Tensor] = field(default_factory=dict)
    _leaf_ids: dict[int, int] = field(default_factory=dict)
    _prev: Any = None

    def __enter__(self) -> Tape:
        self._prev = active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = self._prev
        self._prev = None

    def _handle(self, x) -> int:
        if isinstance(x, Tensor):
            if x._tape is self:
                return x._handle
            key = id(x)
            if key in self._leaf_ids:
                return self._leaf_ids[key]
            h = len(self.values)
            self.values.append(x.data)
            self._leaf_ids[key] = h
            self.leaves[h] = x
            return h
        h = len(self.values)
        self.values.append(np.asarray(x, dtype=np.float64))
        return h

    def tracked(self, x) -> bool:
        return isinstance(x, Tensor) and (x._tape is self or x.requires_grad)

    def replay(self) -> list[np.ndarray]:
        """Re-execute every entry from the recorded leaf values; returns the outputs in order."""
        values = list(self.values)
        outs = []
        for e in self.entries:
            out, _ = _PRIMS[e.op].forward(*(values[h] for h in e.inputs), **e.attrs)
            values[e.output] = out
            outs.append(out)
        return outs

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Primitive:
    forward: Callable[..., tuple[np.ndarray, Any]]
    vjp: Callable[..., Sequence[np.ndarray | None]]


_PRIMS: dict[str, Primitive] = {}


def _primitive(name: str, vjp: Callable):
    def register(forward):
        _PRIMS[name] = Primitive(forward, vjp)
        return forward

    return register


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def apply(op: str, *inputs, **attrs) -> Tensor:
    """Run primitive ``op`` forward and record it if the active tape tracks an input."""
    arrays = [_array(x) for x in inputs]
    out, saved = _PRIMS[op].forward(*arrays, **attrs)
    tape = active_tape()
    if tape is None or not any(tape.tracked(x) for x in inputs):
        return Tensor(out)
    handles = tuple(tape._handle(x) for x in inputs)
    h = len(tape.values)
    tape.values.append(out)
    tape.entries.append(Entry(op, handles, h, attrs, saved))
    t = Tensor(out)
    t._tape, t._handle = tape, h
    return t


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise binary


def _add_vjp(g, ins, out, attrs, saved):
    a, b = ins
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


@_primitive("add", _add_vjp)
def _add_fwd(a, b):
    _broadcast_check("add", a, b)
    return a + b, None


def _sub_vjp(g, ins, out, attrs, saved):
    a, b = ins
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


@_primitive("sub", _sub_vjp)
def _sub_fwd(a, b):
    _broadcast_check("sub", a, b)
    return a - b, None


def _mul_vjp(g, ins, out, attrs, saved):
    a, b = ins
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@_primitive("mul", _mul_vjp)
def _mul_fwd(a, b):
    _broadcast_check("mul", a, b)
    return a * b, None


def _swap(x):
    return np.swapaxes(x, -1, -2)


def _matmul_vjp(g, ins, out, attrs, saved):
    a, b = ins
    return _unbroadcast(g @ _swap(b), a.shape), _unbroadcast(_swap(a) @ g, b.shape)


@_primitive("matmul", _matmul_vjp)
def _matmul_fwd(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None
    return a @ b, None


# structural


def _concat_vjp(g, ins, out, attrs, saved):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in ins])[:-1]
    return np.split(g, bounds, axis=axis)


@_primitive("concat", _concat_vjp)
def _concat_fwd(*xs, axis):
    ref = xs[0].shape
    ax = axis % len(ref)
    for x in xs[1:]:
        if x.ndim != len(ref) or any(x.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat along axis {axis}: shapes {ref} and {x.shape} do not conform")
    return np.concatenate(xs, axis=axis), None


def scatter_rows(g: np.ndarray, index: np.ndarray, rows: int) -> np.ndarray:
    """Sum rows of ``g`` into ``rows`` buckets given by ``index`` (deterministic order)."""
    out = np.zeros((rows,) + g.shape[1:])
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    sidx = index[order]
    uniq, starts = np.unique(sidx, return_index=True)
    out[uniq] = np.add.reduceat(g[order], starts, axis=0)
    return out


def _take_vjp(g, ins, out, attrs, saved):
    (x,) = ins
    return (scatter_rows(g, attrs["index"], x.shape[0]),)


@_primitive("take", _take_vjp)
def _take_fwd(x, *, index):
    if x.ndim == 0:
        raise ShapeError("take: cannot index a 0-d tensor")
    if index.size and (index.min() < -x.shape[0] or index.max() >= x.shape[0]):
        raise ShapeError(f"take: index out of range for shape {x.shape}")
    return x[index], None


def _getslice_vjp(g, ins, out, attrs, saved):
    (x,) = ins
    z = np.zeros_like(x)
    z[attrs["key"]] = g
    return (z,)


@_primitive("getslice", _getslice_vjp)
def _getslice_fwd(x, *, key):
    return x[key], None


def _reshape_vjp(g, ins, out, attrs, saved):
    return (g.reshape(ins[0].shape),)


@_primitive("reshape", _reshape_vjp)
def _reshape_fwd(x, *, shape):
    try:
        return x.reshape(shape), None
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None


def _transpose_vjp(g, ins, out, attrs, saved):
    axes = attrs["axes"]
    if axes is None:
        return (g.T,)
    return (np.transpose(g, np.argsort(axes)),)


@_primitive("transpose", _transpose_vjp)
def _transpose_fwd(x, *, axes):
    return (x.T if axes is None else np.transpose(x, axes)), None


# elementwise unary


def _relu_vjp(g, ins, out, attrs, saved):
    return (g * saved,)


@_primitive("relu", _relu_vjp)
def _relu_fwd(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def _sigmoid_vjp(g, ins, out, attrs, saved):
    return (g * out * (1.0 - out),)


@_primitive("sigmoid", _sigmoid_vjp)
def _sigmoid_fwd(x):
    return expit(x), None


def _log_vjp(g, ins, out, attrs, saved):
    return (g / ins[0],)


@_primitive("log", _log_vjp)
def _log_fwd(x):
    if np.any(~(x > 0)):
        bad = x[~(x > 0)].reshape(-1)[0]
        raise DomainError(f"log: operand must be strictly positive, got {bad!r}")
    return np.log(x), None


def _log_sigmoid_vjp(g, ins, out, attrs, saved):
    return (g * expit(-ins[0]),)


@_primitive("log_sigmoid", _log_sigmoid_vjp)
def _log_sigmoid_fwd(x):
    return -np.logaddexp(0.0, -x), None


def _cos_vjp(g, ins, out, attrs, saved):
    return (-g * np.sin(ins[0]),)


@_primitive("cos", _cos_vjp)
def _cos_fwd(x):
    return np.cos(x), None


def _softmax_vjp(g, ins, out, attrs, saved):
    axis = attrs["axis"]
    return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)


@_primitive("softmax", _softmax_vjp)
def _softmax_fwd(x, *, axis=-1, mask=None):
    if mask is None:
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=axis, keepdims=True), None
    mask = np.broadcast_to(mask, x.shape)
    xm = np.where(mask, x, -np.inf)
    top = np.max(xm, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, x - top, 0.0)), 0.0)
    s = np.sum(e, axis=axis, keepdims=True)
    return e / np.where(s > 0, s, 1.0), None


# reductions


def _sum_vjp(g, ins, out, attrs, saved):
    (x,) = ins
    axis, keepdims = attrs["axis"], attrs["keepdims"]
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, x.shape).copy(),)


@_primitive("sum", _sum_vjp)
def _sum_fwd(x, *, axis=None, keepdims=False):
    return np.sum(x, axis=axis, keepdims=keepdims), None


def _mean_vjp(g, ins, out, attrs, saved):
    (x,) = ins
    (gx,) = _sum_vjp(g, ins, out, attrs, saved)
    count = x.size if attrs["axis"] is None else np.prod([x.shape[a] for a in np.atleast_1d(attrs["axis"])])
    return (gx / count,)


@_primitive("mean", _mean_vjp)
def _mean_fwd(x, *, axis=None, keepdims=False):
    return np.mean(x, axis=axis, keepdims=keepdims), None


# public functional API


def add(a, b) -> Tensor:
    return apply("add", a, b)


def sub(a, b) -> Tensor:
    return apply("sub", a, b)


def mul(a, b) -> Tensor:
    return apply("mul", a, b)


def matmul(a, b) -> Tensor:
    return apply("matmul", a, b)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    return apply("concat", *xs, axis=axis)


def take(x, index) -> Tensor:
    """Gather rows (first axis) of ``x``; the gradient scatter-adds back."""
    return apply("take", x, index=np.asarray(index, dtype=np.int64))


def getslice(x, key) -> Tensor:
    return apply("getslice", x, key=key)


def reshape(x, shape) -> Tensor:
    return apply("reshape", x, shape=tuple(shape))


def transpose(x, axes=None) -> Tensor:
    return apply("transpose", x, axes=None if axes is None else tuple(axes))


def relu(x) -> Tensor:
    return apply("relu", x)


def sigmoid(x) -> Tensor:
    return apply("sigmoid", x)


def log(x) -> Tensor:
    return apply("log", x)


def log_sigmoid(x) -> Tensor:
    """``log(sigmoid(x))`` without overflow for large ``|x|``."""
    return apply("log_sigmoid", x)


def cos(x) -> Tensor:
    return apply("cos", x)


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get weight 0.

    A slice whose mask is entirely False yields all zeros.
    """
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
    return apply("softmax", x, axis=axis, mask=mask)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    return apply("sum", x, axis=axis, keepdims=keepdims)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    return apply("mean", x, axis=axis, keepdims=keepdims)


# differentiation


def backprop(
    tape: Tape, loss: Tensor, params: Mapping[str, Tensor] | None = None
) -> dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` with respect to trainable leaves on ``tape``.

    Keys are parameter names.  When ``params`` is given, exactly those
    parameters are returned and unreachable ones get zero gradients.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ShapeError(f"backprop needs a scalar loss, got shape {getattr(loss, 'shape', None)}")
    grads: list[np.ndarray | None] = [None] * len(tape.values)
    if loss._tape is tape:
        grads[loss._handle] = np.ones_like(loss.data)
        for e in reversed(tape.entries):
            g = grads[e.output]
            if g is None:
                continue
            ins = [tape.values[h] for h in e.inputs]
            for h, gi in zip(e.inputs, _PRIMS[e.op].vjp(g, ins, tape.values[e.output], e.attrs, e.saved)):
                if gi is None:
                    continue
                grads[h] = gi if grads[h] is None else grads[h] + gi

    by_id = {id(t): h for h, t in tape.leaves.items()}
    if params is None:
        params = {t.name or f"leaf{h}": t for h, t in tape.leaves.items() if t.requires_grad}
    out = {}
    for name, p in params.items():
        h = by_id.get(id(p))
        g = grads[h] if h is not None else None
        out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64).reshape(p.shape)
    return out


def finite_diff_check(
    fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    The error per entry is ``|analytic - fd| / max(1, |fd|)``.  ``fn`` must be
    deterministic; it is evaluated twice at the base point to confirm that.
    """
    if not 0 < h <= 1e-2:
        raise ValueError(f"finite-difference step must lie in (0, 1e-2], got {h}")
    for p in params.values():
        p.data = np.ascontiguousarray(p.data)
    with Tape() as tape:
        loss = fn(params)
    analytic = backprop(tape, loss, params)
    f0 = fn(params).item()
    f1 = fn(params).item()
    if f0 != f1 or f0 != loss.item():
        raise NonDeterminismError(f"fn returned {loss.data!r}, {f0!r}, {f1!r} at the same point")

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(params).item()
            flat[i] = orig - h
            fm = fn(params).item()
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst
