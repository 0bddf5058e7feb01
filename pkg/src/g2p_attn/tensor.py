"""Dense tensors with tape-based reverse-mode automatic differentiation.

Operations performed while a :class:`Tape` is active are recorded together
with their local gradient rules; :func:`backward` replays the tape in reverse.
Outside a tape nothing is recorded, which is the fast path used for inference.

Arrays are row-major with the batch dimension first. Model arithmetic runs in
float32; tensors built from float64 arrays stay float64, which is what the
finite-difference harness in :func:`gradcheck` relies on.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericalError

DEFAULT_DTYPE = np.float32

_local = threading.local()


def _stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


@dataclass
class _Record:
    op: str
    out: "Tensor"
    inputs: tuple
    backward: Callable


@dataclass
class Tape:
    """Ordered record of primitive operations.

    Use as a context manager; tapes nest, and the innermost one records.
    ``replay_log`` lists the record indices visited by the last backward pass.
    """

    records: list = field(default_factory=list)
    replay_log: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)

    def ops(self) -> list[str]:
        return [r.op for r in self.records]


@contextlib.contextmanager
def no_tape():
    """Suspend recording inside the block (nested tapes included)."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


_anomaly = {"enabled": False}


def set_detect_anomalies(enabled: bool) -> None:
    _anomaly["enabled"] = bool(enabled)


@contextlib.contextmanager
def detect_anomalies(enabled: bool = True):
    """Raise :class:`NumericalError` as soon as an op yields NaN/Inf."""
    previous = _anomaly["enabled"]
    _anomaly["enabled"] = enabled
    try:
        yield
    finally:
        _anomaly["enabled"] = previous


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced by {where}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.generic)) and np.issubdtype(data.dtype, np.floating):
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

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
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def exp(self) -> "Tensor":
        return exp(self)


def _raise_item(t: Tensor):
    raise DimensionError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(value, dtype=dtype))


def _result(data: np.ndarray, inputs: tuple, backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _anomaly["enabled"]:
        _check_finite(data, f"forward {op}")
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append(_Record(op, out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                   "mul")


def scale(a: Tensor, k: float) -> Tensor:
    k = a.dtype.type(k)
    return _result(a.data * k, (a,), lambda g: (g * k,), "scale")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,), "exp")


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        return a, b
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a`` of shape ``[..., k]`` and a matrix ``b`` of shape ``[k, n]``."""
    a, b = _pair(a, b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w.T + b`` with ``w`` stored as ``[out, in]``."""
    if w.ndim != 2 or x.ndim < 1 or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weights {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"linear: bias {b.shape} does not match weights {w.shape}")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    def backward(g):
        gx = g @ w.data
        g2 = g.reshape(-1, w.shape[0])
        gw = g2.T @ x.data.reshape(-1, w.shape[1])
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, w) if b is None else (x, w, b)
    return _result(y, inputs, backward, "linear")


def transpose(a: Tensor) -> Tensor:
    if a.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 dims, got {a.shape}")
    return _result(np.swapaxes(a.data, -1, -2), (a,),
                   lambda g: (np.swapaxes(g, -1, -2),), "transpose")


# ---------------------------------------------------------------- structure


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("stack of an empty list")
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(data, tensors, backward, "stack")


def _is_basic(key) -> bool:
    items = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is None or k is Ellipsis for k in items)


def index(a: Tensor, key) -> Tensor:
    """Basic slicing or integer-array gathering; gradients scatter back additively."""
    try:
        data = a.data[key]
    except IndexError as exc:
        raise DimensionError(f"index {key!r} invalid for shape {a.shape}") from exc
    basic = _is_basic(key)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _result(np.array(data, copy=basic), (a,), backward, "index")


def take_rows(table: Tensor, ids) -> Tensor:
    """Rows of a 2-D ``table`` selected by an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D table, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"row ids out of range for table with {table.shape[0]} rows")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.data[ids], (table,), backward, "take_rows")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from exc
    return _result(data, (a,), lambda g: (g.reshape(a.shape),), "reshape")


# ---------------------------------------------------------------- reductions


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(data, dtype=a.dtype), (a,), backward, "sum")


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax with max-subtraction; positions where ``mask`` is False get weight 0."""
    if a.size == 0 or a.shape[axis] == 0:
        raise DimensionError("softmax of an empty tensor")
    z = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
        if not np.all(mask.any(axis=axis)):
            raise DimensionError("softmax: a row is fully masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), backward, "softmax")


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Weighted sum over rows of ``-log softmax(logits)[target]``.

    ``logits`` is ``[B, V]``; ``weights`` (default all ones) lets callers mask
    padded rows and normalise.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    if weights is None:
        weights = np.ones(targets.shape, dtype=logits.dtype)
    weights = np.asarray(weights, dtype=logits.dtype)
    rows = np.arange(targets.shape[0])
    logp = log_softmax_np(logits.data)
    loss = -(weights * logp[rows, targets]).sum()

    def backward(g):
        p = np.exp(logp)
        p[rows, targets] -= 1.0
        return (g * weights[:, None] * p,)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------- reverse pass


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every grad-requiring tensor that ``loss`` depends on.

    Gradients accumulate: leaves that already hold a gradient are added to.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or loss._tape is None:
        raise ContractError("loss was not produced by a taped computation")
    tape = loss._tape
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    tape.replay_log = []
    check = _anomaly["enabled"]
    for i in range(len(tape.records) - 1, -1, -1):
        rec = tape.records[i]
        tape.replay_log.append(i)
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        rec.out.grad = g if rec.out.grad is None else rec.out.grad + g
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if check:
                _check_finite(gi, f"backward {rec.op}")
            gi = np.asarray(gi, dtype=inp.dtype)
            key = id(inp)
            grads[key] = grads[key] + gi if key in grads else gi
            if inp._tape is None:
                leaves[key] = inp
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


# ---------------------------------------------------------------- verification


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max over elements of ``|a - n| / max(1e-8, |a| + |n|)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def numerical_gradient(fn: Callable, arrays: Sequence[np.ndarray], eps: float = 1e-3,
                       coords=None) -> list[np.ndarray]:
    """Central differences of scalar ``fn(*tensors)`` with respect to each array.

    ``coords`` optionally restricts, per array, which flat indices are probed;
    the remaining entries are left as NaN.
    """
    arrays = [np.array(x, dtype=np.float64) for x in arrays]
    out = []
    for k, x in enumerate(arrays):
        g = np.full(x.shape, np.nan) if coords is not None else np.zeros(x.shape)
        flat = x.reshape(-1)
        gflat = g.reshape(-1)
        probe = range(flat.size) if coords is None else coords[k]
        for j in probe:
            orig = flat[j]
            flat[j] = orig + eps
            with no_tape():
                fp = fn(*[Tensor(a) for a in arrays]).item()
            flat[j] = orig - eps
            with no_tape():
                fm = fn(*[Tensor(a) for a in arrays]).item()
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * eps)
        out.append(g)
    return out


def analytic_gradient(fn: Callable, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in arrays]
    with Tape():
        loss = fn(*tensors)
        backward(loss)
    return [t.grad if t.grad is not None else np.zeros(t.shape) for t in tensors]


def gradcheck(fn: Callable, arrays: Sequence[np.ndarray], eps: float = 1e-3,
              max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Compare taped gradients with 64-bit central differences.

    Returns the worst relative error over all probed elements. With
    ``max_coords`` only that many randomly chosen entries per array are probed.
    """
    arrays = [np.array(x, dtype=np.float64) for x in arrays]
    analytic = analytic_gradient(fn, arrays)
    coords = None
    if max_coords is not None:
        rng = rng or np.random.default_rng(0)
        coords = [rng.choice(a.size, size=min(a.size, max_coords), replace=False) for a in arrays]
    numeric = numerical_gradient(fn, arrays, eps=eps, coords=coords)
    worst = 0.0
    for k, (ga, gn) in enumerate(zip(analytic, numeric)):
        if coords is not None:
            idx = coords[k]
            ga, gn = ga.reshape(-1)[idx], gn.reshape(-1)[idx]
        worst = max(worst, relative_error(ga, gn))
    return worst
