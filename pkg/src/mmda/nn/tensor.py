"""Array type with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array.  Operations in :mod:`mmda.nn.ops`
append a record to the active :class:`Tape` whenever one of their inputs
requires a gradient; :meth:`Tape.backward` replays those records in exact
reverse order.  Outside a tape no records are kept, which is what inference
(beam search, validation) uses.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_DTYPES = {32: np.float32, 64: np.float64}
_default_dtype = np.float32


class NonFiniteError(FloatingPointError):
    """A forward pass produced NaN or Inf."""


def get_default_dtype():
    return _default_dtype


def resolve_dtype(precision) -> np.dtype:
    """Map ``32``/``64``/``"float32"``/``np.float64`` to a numpy float dtype."""
    if precision in _DTYPES:
        return np.dtype(_DTYPES[precision])
    dt = np.dtype(precision)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {precision!r}")
    return dt


@contextlib.contextmanager
def precision(bits) -> Iterator[None]:
    """Temporarily change the dtype used for newly created parameters."""
    global _default_dtype
    old = _default_dtype
    _default_dtype = resolve_dtype(bits).type
    try:
        yield
    finally:
        _default_dtype = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind != "f":
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar.  Imported lazily to avoid a circular import.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)


class Parameter(Tensor):
    """Trainable leaf tensor carrying its gradient and Adadelta accumulators.

    ``partition`` names the parameter group the tensor belongs to
    (``enc``, ``aug``, ``att``, ``dec`` or ``lm``); optimizers and the
    trainer use it to decide which parameters a step may touch.
    """

    __slots__ = ("name", "partition", "acc_grad", "acc_delta")

    def __init__(self, data, name: str = "", partition: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.data = np.array(self.data, copy=True)
        self.name = name
        self.partition = partition
        self.grad = np.zeros_like(self.data)
        self.acc_grad = np.zeros_like(self.data)
        self.acc_delta = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def astype(self, dtype) -> None:
        """Convert value, gradient and accumulators in place to ``dtype``."""
        dtype = resolve_dtype(dtype)
        self.data = self.data.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.acc_grad = self.acc_grad.astype(dtype)
        self.acc_delta = self.acc_delta.astype(dtype)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, partition={self.partition!r}, shape={self.shape})"


BackwardFn = Callable[..., Sequence[Optional[np.ndarray]]]


class _Record:
    __slots__ = ("inputs", "outputs", "backward")

    def __init__(self, inputs, outputs, backward):
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


_tape_stack: list["Tape"] = []


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager around a forward pass, then call
    :meth:`backward` once on a scalar result.

    >>> with Tape() as tape:
    ...     loss = ops.sum(ops.mul(p, p))
    >>> tape.backward(loss)
    """

    def __init__(self, check_finite: bool = True):
        self.records: list[_Record] = []
        self.check_finite = check_finite
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, inputs, outputs, backward: BackwardFn) -> None:
        if self._consumed:
            raise RuntimeError("tape already replayed; start a new forward pass")
        self.records.append(_Record(tuple(inputs), tuple(outputs), backward))

    def backward(self, loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable ``Parameter.grad``."""
        if self._consumed:
            raise RuntimeError("backward called twice on the same tape")
        self._consumed = True
        if self.check_finite and not np.all(np.isfinite(loss.data)):
            raise NonFiniteError("non-finite loss")
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward needs an explicit grad for non-scalar outputs")
            grad = np.ones_like(loss.data)
        _accumulate(loss, grad)
        for rec in reversed(self.records):
            out_grads = [o.grad for o in rec.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [np.zeros_like(o.data) if g is None else g
                         for o, g in zip(rec.outputs, out_grads)]
            in_grads = rec.backward(*out_grads)
            for t, g in zip(rec.inputs, in_grads):
                if g is not None and t.requires_grad:
                    _accumulate(t, g)
        # Intermediate gradients are no longer needed; drop them so that a
        # second tape over the same tensors starts clean.
        for rec in self.records:
            for o in rec.outputs:
                if not isinstance(o, Parameter):
                    o.grad = None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def active_tape() -> Optional[Tape]:
    return _tape_stack[-1] if _tape_stack else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)
