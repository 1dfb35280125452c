"""A small reverse-mode autodiff tape over dense float64 matrices.

Every primitive records one node holding its forward value, its operand
nodes and a vector-Jacobian closure. ``grad_of`` replays the tape backwards
exactly once and returns gradients for the registered parameters.

    tape = Tape()
    W = tape.param(np.zeros((3, 2)))
    loss = reduce_sum(tanh(matmul(tape.const(X), W)))
    (dW,) = grad_of(tape, loss)
"""

import numpy as np

from . import ops
from ..errors import ContractViolation


class Node:
    __slots__ = ("tape", "value", "parents", "vjp", "index", "requires_grad", "name")

    def __init__(self, tape, value, parents, vjp, requires_grad, name=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.index = len(tape.nodes)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        label = self.name or "node"
        return f"<{label} #{self.index} shape={self.value.shape}>"


class Tape:
    """Ordered record of primitive nodes; single owner, single thread."""

    def __init__(self):
        self.nodes = []
        self.params = []

    def _push(self, value, parents=(), vjp=None, requires_grad=False, name=None):
        node = Node(self, value, tuple(parents), vjp, requires_grad, name)
        self.nodes.append(node)
        return node

    def param(self, value, name=None):
        node = self._push(ops.as_matrix(value).copy(), requires_grad=True, name=name)
        self.params.append(node)
        return node

    def const(self, value, name=None):
        return self._push(ops.as_matrix(value), name=name)

    def record(self, value, parents, vjp, name=None):
        req = any(p.requires_grad for p in parents)
        return self._push(value, parents, vjp if req else None, req, name)


def _lift(tape, x):
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ContractViolation("operands belong to different tapes")
        return x
    return tape.const(x)


def grad_of(tape, loss, params=None):
    """Gradients of the scalar ``loss`` w.r.t. ``params`` (default: all registered)."""
    if loss.value.size != 1:
        raise ContractViolation(f"loss must be scalar, got shape {loss.value.shape}")
    params = tape.params if params is None else params
    grads = {loss.index: np.ones_like(loss.value)}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = grads.pop(node.index, None)
        if g is None or node.vjp is None:
            if g is not None:
                grads[node.index] = g
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = pg
    return [grads.get(p.index, np.zeros_like(p.value)) for p in params]


# -- primitives ---------------------------------------------------------------

def matmul(a, b):
    tape = a.tape if isinstance(a, Node) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul shape mismatch {a.shape} @ {b.shape}")
    A, B = a.value, b.value
    return tape.record(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g), "matmul")


def add(a, b):
    tape = a.tape if isinstance(a, Node) else b.tape
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape != b.shape:
        raise ContractViolation(f"add shape mismatch {a.shape} + {b.shape}")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def scale(a, s):
    s = float(s)
    return a.tape.record(a.value * s, (a,), lambda g: (g * s,), "scale")


def mul(a, b):
    """Elementwise product; ``b`` may be a constant array."""
    tape = a.tape
    b = _lift(tape, b)
    if a.shape != b.shape:
        raise ContractViolation(f"mul shape mismatch {a.shape} * {b.shape}")
    A, B = a.value, b.value
    return tape.record(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def transpose(a):
    return a.tape.record(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def tanh(a):
    y = np.tanh(a.value)
    return a.tape.record(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a):
    y = np.exp(a.value)
    return a.tape.record(y, (a,), lambda g: (g * y,), "exp")


def log(a, floor=1e-12):
    """Natural log with the argument clamped below at ``floor``."""
    x = a.value
    clamped = x < floor
    y = np.log(np.where(clamped, floor, x))

    def vjp(g):
        return (np.where(clamped, 0.0, g / np.where(clamped, 1.0, x)),)

    return a.tape.record(y, (a,), vjp, "log")


def row_softmax(a):
    y = ops.row_softmax(a.value)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=1, keepdims=True)),)

    return a.tape.record(y, (a,), vjp, "row_softmax")


def l2_normalize_rows(a):
    x = a.value
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]
    nonzero = norms > 0.0
    safe = np.where(nonzero, norms, 1.0)
    y = x / safe

    def vjp(g):
        proj = g - y * np.sum(g * y, axis=1, keepdims=True)
        return (np.where(nonzero, proj / safe, g),)

    return a.tape.record(y, (a,), vjp, "l2_normalize_rows")


def gather_rows(a, idx):
    idx = np.asarray(idx, dtype=np.intp)
    n = a.shape[0]

    def vjp(g):
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, idx, g)
        return (out,)

    return a.tape.record(a.value[idx], (a,), vjp, "gather_rows")


def reduce_sum(a):
    shape = a.shape
    return a.tape.record(np.array([[a.value.sum()]]), (a,),
                         lambda g: (np.full(shape, g[0, 0]),), "reduce_sum")


def masked_logsumexp_rows(a, mask):
    """Row log-sum-exp restricted to ``mask``; empty rows give 0 and no gradient."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ContractViolation(f"mask shape {mask.shape} != operand shape {a.shape}")
    y = ops.masked_logsumexp_rows(a.value, mask)
    has_any = mask.any(axis=1, keepdims=True)

    def vjp(g):
        w = np.where(mask, np.exp(np.where(mask, a.value - y, -np.inf)), 0.0)
        return (np.where(has_any, w * g, 0.0),)

    return a.tape.record(y, (a,), vjp, "masked_logsumexp_rows")
