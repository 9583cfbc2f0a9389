"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a NumPy array. Operations performed while a
:class:`Tape` is active, and that touch at least one tensor with
``requires_grad=True``, are recorded on that tape together with a backward
rule. ``tape.backward(seed)`` then replays the records in reverse order and
deposits ``d seed / d leaf`` into the ``grad`` field of every leaf.

Outside of a tape nothing is recorded, so inference runs through the very same
operations without bookkeeping overhead.

Storage is float32 or float64; the dtype of an op result follows its inputs.
Reductions and contractions accumulate in float64 regardless of storage.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError, TapeError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

ACC = np.float64  # accumulation dtype


class Tensor:
    """N-dimensional real array that may participate in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape_id", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.dtype not in (np.float32, np.float64):
            raise TypeError(f"unsupported tensor dtype {arr.dtype}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        # id of the tape that produced this tensor; None for leaves
        self._tape_id: int | None = None

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
        return self._tape_id is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a tensor sharing data that never receives gradient."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _stack() -> list["Tape"]:
    s = getattr(_local, "stack", None)
    if s is None:
        s = _local.stack = []
    return s


def current_tape() -> "Tape | None":
    s = _stack()
    return s[-1] if s else None


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; tapes are confined to the thread that entered
    them and may be replayed exactly once.

    >>> x = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = sum_all(x)
    >>> tape.backward(y)
    >>> x.grad
    array([1., 1.])
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self.used = False
        self._thread = threading.get_ident()

    def __enter__(self) -> "Tape":
        if self.used:
            raise TapeError("tape has already been replayed")
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        s = _stack()
        if s and s[-1] is self:
            s.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: BackwardFn) -> None:
        if threading.get_ident() != self._thread:
            raise TapeError("tape used from a thread other than its owner")
        out.requires_grad = True
        out._tape_id = id(self)
        self.records.append(_Record(out, inputs, backward))

    def backward(self, seed: Tensor) -> None:
        """Populate ``grad`` of every reachable leaf with d(seed)/d(leaf)."""
        if self.used:
            raise TapeError("tape is single-use; backward was already called")
        if seed.size != 1:
            raise TapeError(f"seed must be a scalar, got shape {seed.shape}")
        if seed._tape_id != id(self):
            raise TapeError("seed was not produced on this tape")
        self.used = True
        grads: dict[int, np.ndarray] = {id(seed): np.ones(seed.shape, dtype=seed.dtype)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                gi = np.asarray(gi, dtype=inp.dtype).reshape(inp.shape)
                if inp._tape_id is None:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    prev = grads.get(id(inp))
                    grads[id(inp)] = gi if prev is None else prev + gi
        self.records.clear()


def backward(tape: Tape, seed: Tensor) -> None:
    tape.backward(seed)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def result_dtype(*tensors: Tensor):
    return np.result_type(*[t.dtype for t in tensors])


def make_result(data: np.ndarray, inputs: Iterable[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as an op output, recording it if a tape wants it."""
    inputs = tuple(inputs)
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# ---------------------------------------------------------------------------
# elementwise and structural primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    dt = result_dtype(a, b)
    return make_result((a.data + b.data).astype(dt, copy=False), (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    dt = result_dtype(a, b)
    return make_result((a.data - b.data).astype(dt, copy=False), (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    dt = result_dtype(a, b)
    ad, bd = a.data, b.data
    return make_result((ad * bd).astype(dt, copy=False), (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, factor: float) -> Tensor:
    f = float(factor)
    return make_result(a.data * a.dtype.type(f), (a,), lambda g: (g * f,))


def sum_all(a: Tensor) -> Tensor:
    """Sum of every entry, as a 0-d tensor (accumulated in float64)."""
    total = np.asarray(a.data.sum(dtype=ACC), dtype=a.dtype)
    shape = a.shape
    return make_result(total, (a,), lambda g: (np.broadcast_to(g, shape),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from e
    old = a.shape
    return make_result(out, (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return make_result(a.data.T.copy(), (a,), lambda g: (g.T,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    dt = result_dtype(a, b)
    a64, b64 = a.data.astype(ACC), b.data.astype(ACC)
    out = (a64 @ b64).astype(dt)

    def bw(g):
        g64 = g.astype(ACC)
        return g64 @ b64.T, a64.T @ g64

    return make_result(out, (a, b), bw)


def inv(a: Tensor) -> Tensor:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"inv expects a square matrix, got shape {a.shape}")
    ai = np.linalg.inv(a.data.astype(ACC))

    def bw(g):
        return (-(ai.T @ g.astype(ACC) @ ai.T),)

    return make_result(ai.astype(a.dtype), (a,), bw)


def apply_masks(w: Tensor, masks: Tensor) -> Tensor:
    """Multiply one representation ``[..., N, F]`` by C masks ``[..., C, N, F]``."""
    if masks.ndim != w.ndim + 1 or masks.shape[:-3] != w.shape[:-2] or masks.shape[-2:] != w.shape[-2:]:
        raise ShapeError(f"apply_masks: masks {masks.shape} do not fit representation {w.shape}")
    dt = result_dtype(w, masks)
    wd = np.expand_dims(w.data, -3)
    md = masks.data
    out = (wd * md).astype(dt, copy=False)

    def bw(g):
        return (g * md).sum(axis=-3, dtype=ACC), g * wd

    return make_result(out, (w, masks), bw)
