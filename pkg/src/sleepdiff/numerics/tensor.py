"""Dense tensor with a tape-based reverse-mode gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64
_TAPES: list["GradTape"] = []


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A numpy array plus gradient bookkeeping.

    Leaf tensors (parameters, inputs) keep their ``grad`` after a backward
    pass; intermediate results have it cleared as the tape unwinds.
    """

    __array_priority__ = 1000
    __slots__ = ("data", "grad", "requires_grad", "is_leaf", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True
        self.name = name

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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operator sugar (implemented in ops) -------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __pow__(self, exponent: float):
        from . import ops
        return ops.power(self, exponent)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        from . import ops
        return ops.swapaxes(self, a, b)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap constants; python scalars adopt the dtype of ``like``."""
    if isinstance(x, Tensor):
        return x
    if like is not None:
        return Tensor(np.asarray(x, dtype=like.dtype))
    return Tensor(x)


@dataclass
class TapeEntry:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    op: str = ""


@dataclass
class GradTape:
    """Records differentiable operations executed while the tape is active.

    ``backward`` walks the entries once each, newest first, and accumulates
    gradients into every tensor that requires them.
    """

    entries: list[TapeEntry] = field(default_factory=list)
    visit_order: list[int] = field(default_factory=list)

    def __enter__(self) -> "GradTape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if loss.size != 1:
                raise DimensionError("backward() without an explicit grad needs a scalar loss")
            grad = np.ones_like(loss.data)
        loss.grad = np.asarray(grad, dtype=loss.dtype)
        self.visit_order = []
        for i in range(len(self.entries) - 1, -1, -1):
            entry = self.entries[i]
            self.visit_order.append(i)
            g = entry.out.grad
            if g is None:
                continue
            pgrads = entry.backward(g)
            for parent, pg in zip(entry.parents, pgrads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise DimensionError(
                        f"{entry.op}: gradient shape {pg.shape} != input shape {parent.shape}"
                    )
                parent.grad = pg if parent.grad is None else parent.grad + pg
            if not entry.out.is_leaf:
                entry.out.grad = None
        self.entries.clear()


def active_tape() -> GradTape | None:
    return _TAPES[-1] if _TAPES else None


def make_op(
    out_data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op: str = "",
) -> Tensor:
    """Wrap a forward result and, under an active tape, record its backward.

    ``backward`` maps the output cotangent to one gradient (or None) per parent.
    """
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        out.is_leaf = False
        tape.entries.append(TapeEntry(out, tuple(parents), backward, op))
    return out
