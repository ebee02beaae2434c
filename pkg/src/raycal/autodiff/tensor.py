"""Tensor and define-by-run tape.

A :class:`Tape` is activated with ``with Tape() as tape:``; every operation
whose inputs require gradients appends a node while a tape is active.
:func:`backward` then walks the nodes in reverse order.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError, NumericError, StateError

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    """Return the innermost active tape of this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


_debug = False


def set_debug(flag: bool) -> None:
    """Toggle the per-op finiteness check (off by default)."""
    global _debug
    _debug = bool(flag)


def debug_enabled() -> bool:
    return _debug


class Tensor:
    """Dense float64 array that can take part in reverse-mode differentiation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; the functions live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(ops.as_tensor(other), self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)

    def sum(self):
        from . import ops
        return ops.reduce("sum", self)

    def mean(self):
        from . import ops
        return ops.reduce("mean", self)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Append-only record of operations for one forward/backward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise StateError("tape already consumed; create a new Tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def reset(self) -> None:
        """Drop all nodes so the tape can record a fresh pass."""
        for node in self.nodes:
            node.output.node_id = None
            node.output._tape = None
        self.nodes = []
        self.consumed = False

    def record(self, op, inputs, output, backward_fn):
        if self.consumed:
            raise StateError("cannot record on a consumed tape")
        output.node_id = len(self.nodes)
        output._tape = self
        self.nodes.append(Node(op, tuple(inputs), output, backward_fn))

    def first_nonfinite(self):
        """Return (index, op name) of the first node with a non-finite output."""
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.output.data)):
                return i, node.op
        return None


def make_result(op: str, data: np.ndarray, inputs, backward_fn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and record it when needed."""
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == np.float64 else data.astype(np.float64)
    out.requires_grad = needs_grad
    out.grad = None
    out.node_id = None
    out.name = None
    out._tape = None
    if _debug and not np.all(np.isfinite(out.data)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise NumericError(f"op '{op}' produced non-finite values from finite inputs")
    if needs_grad:
        tape = active_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``.grad`` of every requires-grad tensor that ``loss`` depends on.

    Gradients are added to whatever ``.grad`` already holds; zeroing is the
    caller's job. The tape is marked consumed afterwards.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise StateError("backward called on a consumed tape")
    tape.consumed = True
    seed = np.ones_like(loss.data)
    if loss._tape is not tape:
        # loss is a leaf (or came from another tape): d loss / d loss = 1
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    pending = {loss.node_id: seed}
    for idx in range(loss.node_id, -1, -1):
        g = pending.pop(idx, None)
        if g is None:
            continue
        node = tape.nodes[idx]
        out = node.output
        out.grad = g if out.grad is None else out.grad + g
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp._tape is tape and inp.node_id is not None:
                prev = pending.get(inp.node_id)
                pending[inp.node_id] = gi if prev is None else prev + gi
            elif inp.grad is None:
                fresh = gi is not g and gi.base is None and gi.flags.writeable
                inp.grad = gi if fresh else np.array(gi, dtype=np.float64, copy=True)
            else:
                inp.grad += gi
