"""Reverse-mode automatic differentiation on dense float64 arrays.

A :class:`Tape` records every primitive operation as a node holding its
value, the ids of its operands and a local gradient rule.  Nodes are
appended in evaluation order, so operand ids are always smaller than the
id of the node that consumes them and the backward pass is a single sweep
in reverse id order.

All operations in this module are polymorphic: called on plain arrays they
simply return arrays, called with at least one :class:`Node` they record a
new node on that node's tape.  Model and loss code can therefore be written
once and used both for training and for plain numerical evaluation::

    tape = Tape()
    w = tape.leaf(np.ones((3, 2)))
    loss = sum(square(matmul(x, w)))
    grads = tape.backward(loss)
    grads[w]
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from pita.errors import ContractError, ShapeError

Rule = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self) -> None:
        self._values: list[np.ndarray] = []
        self._operands: list[tuple[int, ...]] = []
        self._rules: list[Rule | None] = []
        self._requires_grad: list[bool] = []

    def __len__(self) -> int:
        return len(self._values)

    def leaf(self, value, requires_grad: bool = True) -> Node:
        """Record an input node (parameter or data)."""
        arr = np.array(value, dtype=np.float64)
        return self._append(arr, (), None, requires_grad)

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def record(self, value: np.ndarray, operands: Sequence[Node], rule: Rule) -> Node:
        for op in operands:
            if op.tape is not self:
                raise ContractError("operands belong to a different tape")
        ids = tuple(op.id for op in operands)
        needs = any(self._requires_grad[i] for i in ids)
        return self._append(value, ids, rule, needs)

    def _append(self, value, ids, rule, requires_grad) -> Node:
        node_id = len(self._values)
        self._values.append(value)
        self._operands.append(ids)
        self._rules.append(rule)
        self._requires_grad.append(requires_grad)
        return Node(self, node_id)

    def operands(self, node: Node) -> tuple[int, ...]:
        return self._operands[node.id]

    def backward(self, root: Node) -> Adjoint:
        """Propagate adjoints from a scalar ``root`` to every node.

        Visits each node at most once, in strictly decreasing id order.
        """
        if root.tape is not self:
            raise ContractError("root belongs to a different tape")
        if root.value.size != 1:
            raise ContractError(f"backward root must be scalar, got shape {root.shape}")
        adj: list[np.ndarray | None] = [None] * (root.id + 1)
        adj[root.id] = np.ones_like(root.value)
        for i in range(root.id, -1, -1):
            g = adj[i]
            rule = self._rules[i]
            if g is None or rule is None:
                continue
            ids = self._operands[i]
            for j, gj in zip(ids, rule(g)):
                if gj is None or not self._requires_grad[j]:
                    continue
                if adj[j] is None:
                    adj[j] = np.array(gj, dtype=np.float64)
                else:
                    adj[j] += gj
        return Adjoint(self, adj)


class Adjoint:
    """Gradient store returned by :meth:`Tape.backward`.

    Indexing with a node returns the gradient of the root with respect to
    that node; nodes the root does not depend on get zeros.
    """

    def __init__(self, tape: Tape, adj: list[np.ndarray | None]) -> None:
        self._tape = tape
        self._adj = adj

    def __getitem__(self, node: Node) -> np.ndarray:
        if node.tape is not self._tape:
            raise ContractError("node belongs to a different tape")
        g = self._adj[node.id] if node.id < len(self._adj) else None
        if g is None:
            return np.zeros_like(node.value)
        return g


class Node:
    """Handle to a recorded value on a tape."""

    __slots__ = ("tape", "id")
    __array_priority__ = 100.0

    def __init__(self, tape: Tape, node_id: int) -> None:
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape._values[self.id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(id={self.id}, shape={self.shape})"

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

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return NotImplemented

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)

    def sum(self, axis=None):
        return sum(self, axis)


def is_node(x) -> bool:
    return isinstance(x, Node)


def value_of(x) -> np.ndarray:
    """Plain array behind ``x`` whether or not it is a node."""
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _lift(operands):
    """Return the shared tape and operands converted to nodes, or None."""
    tape = None
    for op in operands:
        if isinstance(op, Node):
            tape = op.tape
            break
    if tape is None:
        return None, operands
    out = []
    for op in operands:
        out.append(op if isinstance(op, Node) else tape.constant(op))
    return tape, out


def _check_same_shape(kind, a, b):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{kind}: operand shapes {np.shape(a)} and {np.shape(b)} differ")


# --- primitives -----------------------------------------------------------


def matmul(a, b):
    """Matrix product of two 2-D operands."""
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {av.shape} and {bv.shape}")
    out = av @ bv
    tape, nodes = _lift((a, b))
    if tape is None:
        return out
    return tape.record(out, nodes, lambda g: (g @ bv.T, av.T @ g))


record_matmul = matmul


def _binary(kind, fwd, rule_factory):
    def op(a, b):
        if isinstance(a, (int, float)) or isinstance(b, (int, float)):
            if kind == "mul":
                return scale(b, a) if isinstance(a, (int, float)) else scale(a, b)
            if kind == "add":
                return shift(b, a) if isinstance(a, (int, float)) else shift(a, b)
            if kind == "sub":
                if isinstance(b, (int, float)):
                    return shift(a, -b)
                return shift(scale(b, -1.0), a)
        av, bv = value_of(a), value_of(b)
        _check_same_shape(kind, av, bv)
        out = fwd(av, bv)
        tape, nodes = _lift((a, b))
        if tape is None:
            return out
        return tape.record(out, nodes, rule_factory(av, bv))

    op.__name__ = kind
    return op


add = _binary("add", np.add, lambda av, bv: lambda g: (g, g))
sub = _binary("sub", np.subtract, lambda av, bv: lambda g: (g, -g))
mul = _binary("mul", np.multiply, lambda av, bv: lambda g: (g * bv, g * av))


def _unary(kind, fwd, deriv):
    """Elementwise op whose local derivative is ``deriv(x, y)``."""

    def op(x):
        xv = value_of(x)
        out = fwd(xv)
        if not isinstance(x, Node):
            return out
        return x.tape.record(out, (x,), lambda g: (g * deriv(xv, out),))

    op.__name__ = kind
    return op


tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
sin = _unary("sin", np.sin, lambda x, y: np.cos(x))
cos = _unary("cos", np.cos, lambda x, y: -np.sin(x))
square = _unary("square", np.square, lambda x, y: 2.0 * x)
relu = _unary("relu", lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))

ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sin": sin,
    "cos": cos,
    "square": square,
    "relu": relu,
}


def elementwise(kind: str, *operands):
    """Dispatch an elementwise op by name."""
    try:
        fn = ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise op {kind!r}") from None
    return fn(*operands)


record_elementwise = elementwise


def scale(x, c: float):
    """Multiply by a constant scalar."""
    c = float(c)
    out = value_of(x) * c
    if not isinstance(x, Node):
        return out
    return x.tape.record(out, (x,), lambda g: (g * c,))


def shift(x, c: float):
    """Add a constant scalar."""
    c = float(c)
    out = value_of(x) + c
    if not isinstance(x, Node):
        return out
    return x.tape.record(out, (x,), lambda g: (g,))


def add_bias(x, b):
    """Add a bias vector to every row of a 2-D operand."""
    xv, bv = value_of(x), value_of(b)
    if xv.ndim != 2 or bv.ndim != 1 or xv.shape[1] != bv.shape[0]:
        raise ShapeError(f"add_bias: shapes {xv.shape} and {bv.shape} are incompatible")
    out = xv + bv
    tape, nodes = _lift((x, b))
    if tape is None:
        return out
    return tape.record(out, nodes, lambda g: (g, g.sum(axis=0)))


def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    xv = value_of(x)
    out = np.sum(xv, axis=axis)
    if not isinstance(x, Node):
        return out
    shape = xv.shape
    if axis is None:
        axes = tuple(range(xv.ndim))
    else:
        axes = tuple(a % xv.ndim for a in np.atleast_1d(axis))

    def rule(g):
        return (np.broadcast_to(np.expand_dims(g, axes), shape),)

    return x.tape.record(np.asarray(out), (x,), rule)


def mean(x, axis=None):
    xv = value_of(x)
    n = xv.size if axis is None else int(np.prod([xv.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis), 1.0 / n)


def getitem(x, idx):
    """Basic (slice/integer) indexing."""
    xv = value_of(x)
    out = xv[idx]
    if not isinstance(x, Node):
        return out
    if out.size > 1 and not np.may_share_memory(out, xv):
        raise ContractError("only basic indexing is supported")
    shape = xv.shape

    def rule(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return x.tape.record(np.array(out), (x,), rule)


def reshape(x, shape):
    xv = value_of(x)
    out = xv.reshape(shape)
    if not isinstance(x, Node):
        return out
    orig = xv.shape
    return x.tape.record(out, (x,), lambda g: (g.reshape(orig),))


def stack(items: Sequence, axis: int = -1):
    """Stack equally shaped operands along a new axis."""
    vals = [value_of(it) for it in items]
    for v in vals[1:]:
        _check_same_shape("stack", vals[0], v)
    out = np.stack(vals, axis=axis)
    tape, nodes = _lift(list(items))
    if tape is None:
        return out
    ax = axis % out.ndim

    def rule(g):
        return tuple(np.take(g, k, axis=ax) for k in range(len(nodes)))

    return tape.record(out, nodes, rule)
