"""Dense float32 tensors with tape-based reverse-mode differentiation.

A ``Tape`` records every primitive op whose inputs require gradients, in
execution (hence topological) order. ``backward`` replays the records in
reverse, accumulating gradients into the leaves. One tape supports exactly
one backward pass; tapes are single-threaded (the active-tape stack is
thread-local), and tensors are treated as immutable once created except for
optimizer updates.
"""

import threading

import numpy as np

from .errors import ContractError, TapeReuseError

_tls = threading.local()


def _stack():
    if not hasattr(_tls, "tapes"):
        _tls.tapes = []
    return _tls.tapes


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """n-dimensional float32 array, optionally participating in a tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape_token")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape_token = None

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def size(self):
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive ops; consumed by a single backward pass."""

    def __init__(self):
        self._nodes = []
        self._produced = set()
        self._leaves = {}
        self._consumed = False

    def watch(self, *tensors):
        """Register leaves that must receive a gradient even if unused."""
        for t in tensors:
            self._leaves.setdefault(id(t), t)

    def record(self, out: Tensor, inputs, backward_fn):
        if self._consumed:
            raise TapeReuseError("tape already consumed by backward")
        for t in inputs:
            if t.requires_grad and id(t) not in self._produced:
                self._leaves.setdefault(id(t), t)
        out._tape_token = self
        self._produced.add(id(out))
        self._nodes.append(_Node(out, inputs, backward_fn))

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self
        return False


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(leaf) for every leaf; returns {leaf: grad}.

    Leaves are requires_grad tensors that entered recorded ops, plus any
    tensor registered via ``tape.watch``; leaves that do not influence the
    loss receive zeros.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._consumed:
        raise TapeReuseError("tape already consumed by backward")
    if loss._tape_token is not None and loss._tape_token is not tape:
        raise ContractError("loss was not produced under this tape")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        contribs = node.backward_fn(g)
        for inp, contrib in zip(node.inputs, contribs):
            if contrib is None or not inp.requires_grad:
                continue
            c = np.asarray(contrib, dtype=np.float32)
            if c.shape != inp.data.shape:
                c = c.reshape(inp.data.shape)
            prev = grads.get(id(inp))
            grads[id(inp)] = c if prev is None else prev + c

    tape._consumed = True
    result = {}
    for tid, leaf in tape._leaves.items():
        g = grads.get(tid)
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        result[leaf] = g
    return result
