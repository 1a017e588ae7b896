"""
Reverse-mode autodiff tape

A Node wraps a float64 numpy array (the Tensor) together with the op that
produced it, references to its parents and a closure mapping the output
gradient to one gradient per parent. backward() walks the graph once in
topological order and accumulates gradients into every node that requires them.

Usage:
    x = Node([[3.0]], requires_grad=True)
    y = ops.mul(x, x)
    backward(ops.sum(y))
    x.grad  # [[6.]]
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DimensionError

DTYPE = np.float64

# Tensor values are plain row-major float64 arrays
Tensor = np.ndarray

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_GRAD_ENABLED = contextvars.ContextVar("mrt_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape construction inside the block (evaluation, generation)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


class Node:
    """One value on the tape."""

    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward", "name")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        *,
        op: str = "leaf",
        parents: Tuple["Node", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        name: Optional[str] = None,
    ):
        self.value: Tensor = np.asarray(value, dtype=DTYPE)
        self.grad: Optional[Tensor] = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self._backward = backward_fn
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad = None

    # Operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from src.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from src.tensor import ops
        return ops.div(self, other)

    def __neg__(self):
        from src.tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from src.tensor import ops
        return ops.matmul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Node(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad}{label})"


def as_node(x) -> Node:
    """Wrap constants (arrays, floats) as non-trainable nodes."""
    return x if isinstance(x, Node) else Node(x)


def make_node(value: np.ndarray, parents: Sequence[Node], backward_fn: BackwardFn, op: str) -> Node:
    """Create an op output; the closure is only kept when some parent needs gradients."""
    needs_grad = grad_enabled() and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Node(value, op=op)
    return Node(value, requires_grad=True, op=op, parents=tuple(parents), backward_fn=backward_fn)


def _topological_order(root: Node) -> List[Node]:
    # Iterative post-order DFS restricted to nodes that require gradients
    order: List[Node] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """
    Accumulate d(root)/d(leaf) into .grad of every requires-grad node.

    Args:
        root: scalar node (any shape with exactly one element)

    Raises:
        DimensionError: if root is not a scalar
    """
    if root.size != 1:
        raise DimensionError(f"backward() needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return

    order = _topological_order(root)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, grad in zip(node.parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            parent.grad = grad if parent.grad is None else parent.grad + grad
