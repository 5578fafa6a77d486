"""Reverse-mode automatic differentiation over dense float64 tensors.

A :class:`Graph` is a tape: nodes are appended in execution order, so
insertion order is a valid topological order and the backward sweep is a
single reverse pass.  Values are plain ``numpy`` arrays (always float64);
graph inputs must be finite.

Broadcasting is deliberately restricted to scalar-vs-tensor (a size-1
operand against any shape).  Anything fancier is rejected with a
:class:`ShapeError` so that shape bugs surface at the call site.

A graph instance is not thread-safe; build and differentiate it on one
thread.  Graphs share no module-level state, so independent graphs may
run in parallel freely.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Node",
    "Graph",
    "backward",
    "add",
    "sub",
    "hadamard",
    "matmul",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "pow_const",
    "clip_min_const",
    "clip_max_const",
    "sum",
    "mean",
    "sq_l2",
    "max_abs",
    "cross_entropy_logits",
    "hard_gate",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an operation."""


def _as_value(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("graph inputs must be finite (got NaN or Inf)")
    return arr


class Node:
    """One entry on the tape: an operation result plus its gradient slot."""

    __slots__ = ("graph", "op", "value", "grad", "parents", "_vjps", "is_variable")

    def __init__(self, graph, op, value, parents, vjps, is_variable=False):
        self.graph = graph
        self.op = op
        self.value = value
        self.grad = None
        self.parents = parents
        self._vjps = vjps
        self.is_variable = is_variable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape})"

    # Arithmetic sugar; floats are lifted to constants of the same graph.
    def __add__(self, other):
        return add(self, _lift(self.graph, other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(self.graph, other))

    def __rsub__(self, other):
        return sub(_lift(self.graph, other), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _lift(graph, x):
    if isinstance(x, Node):
        return x
    return graph.constant(np.asarray(x, dtype=np.float64))


class Graph:
    """Append-only node arena; parents always precede children."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _register(self, op, value, parents, vjps, is_variable=False) -> Node:
        node = Node(self, op, value, parents, vjps, is_variable)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        """Enter a fixed tensor.  The array is referenced, not copied."""
        return self._register("const", _as_value(value), (), ())

    def variable(self, value) -> Node:
        """Enter a differentiable leaf.  The array is copied."""
        return self._register("var", _as_value(value).copy(), (), (), is_variable=True)

    def backward(self, root: Node) -> dict[Node, np.ndarray]:
        """Accumulate d(root)/d(leaf) for every variable leaf.

        Resets every accumulator first, so repeated calls (also from
        different roots of the same graph) are independent.  Returned
        arrays are copies owned by the caller.
        """
        if root.graph is not self:
            raise ValueError("root belongs to a different graph")
        if root.value.size != 1:
            raise ShapeError(
                f"backward root must be scalar-valued, got shape {root.value.shape}"
            )
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            for parent, vjp in zip(node.parents, node._vjps):
                contrib = vjp(node.grad)
                if parent.grad is None:
                    parent.grad = np.array(contrib)
                else:
                    parent.grad += contrib
        out = {}
        for node in self.nodes:
            if node.is_variable:
                out[node] = (
                    np.zeros_like(node.value) if node.grad is None else node.grad.copy()
                )
        return out


def backward(graph: Graph, root: Node) -> dict[Node, np.ndarray]:
    return graph.backward(root)


def _same_graph(*nodes) -> Graph:
    g = nodes[0].graph
    for n in nodes[1:]:
        if n.graph is not g:
            raise ValueError("operands belong to different graphs")
    return g


def _binary_shapes(a: Node, b: Node, op: str):
    """Allow equal shapes or a size-1 operand; reject everything else."""
    if a.value.shape == b.value.shape:
        return
    if a.value.size == 1 or b.value.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} do not conform")


def _reduce_to(grad: np.ndarray, like: np.ndarray) -> np.ndarray:
    # Collapse a broadcast gradient back onto a size-1 operand.
    if grad.shape == like.shape:
        return grad
    return np.sum(grad).reshape(like.shape)


def add(a: Node, b: Node) -> Node:
    g = _same_graph(a, b)
    _binary_shapes(a, b, "add")
    av, bv = a.value, b.value
    return g._register(
        "add",
        av + bv,
        (a, b),
        (lambda gr: _reduce_to(gr, av), lambda gr: _reduce_to(gr, bv)),
    )


def sub(a: Node, b: Node) -> Node:
    g = _same_graph(a, b)
    _binary_shapes(a, b, "sub")
    av, bv = a.value, b.value
    return g._register(
        "sub",
        av - bv,
        (a, b),
        (lambda gr: _reduce_to(gr, av), lambda gr: _reduce_to(gr, -bv)),
    )


def hadamard(a: Node, b: Node) -> Node:
    g = _same_graph(a, b)
    _binary_shapes(a, b, "hadamard")
    av, bv = a.value, b.value
    return g._register(
        "hadamard",
        av * bv,
        (a, b),
        (lambda gr: _reduce_to(gr * bv, av), lambda gr: _reduce_to(gr * av, bv)),
    )


def matmul(a: Node, b: Node) -> Node:
    g = _same_graph(a, b)
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0 or av.ndim > 2 or bv.ndim > 2:
        raise ShapeError(f"matmul: unsupported ranks {av.shape} @ {bv.shape}")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {av.shape} @ {bv.shape}")
    value = av @ bv
    if av.ndim == 2 and bv.ndim == 2:
        vjps = (lambda gr: gr @ bv.T, lambda gr: av.T @ gr)
    elif av.ndim == 2 and bv.ndim == 1:
        vjps = (lambda gr: np.outer(gr, bv), lambda gr: av.T @ gr)
    elif av.ndim == 1 and bv.ndim == 2:
        vjps = (lambda gr: bv @ gr, lambda gr: np.outer(av, gr))
    else:  # 1-D dot product
        vjps = (lambda gr: gr * bv, lambda gr: gr * av)
    return g._register("matmul", value, (a, b), vjps)


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return a.graph._register("scale", a.value * c, (a,), (lambda gr: gr * c,))


def sigmoid(a: Node) -> Node:
    av = a.value
    s = np.empty_like(av)
    pos = av >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    e = np.exp(av[~pos])
    s[~pos] = e / (1.0 + e)
    return a.graph._register("sigmoid", s, (a,), (lambda gr: gr * s * (1.0 - s),))


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return a.graph._register("tanh", t, (a,), (lambda gr: gr * (1.0 - t * t),))


def relu(a: Node) -> Node:
    av = a.value
    mask = av > 0
    return a.graph._register("relu", av * mask, (a,), (lambda gr: gr * mask,))


def pow_const(a: Node, p: float) -> Node:
    p = float(p)
    av = a.value
    if p != int(p) and np.any(av < 0):
        raise ValueError("pow_const with non-integer exponent requires non-negative base")
    value = np.power(av, p)
    return a.graph._register(
        "pow_const", value, (a,), (lambda gr: gr * p * np.power(av, p - 1.0),)
    )


def clip_min_const(a: Node, c: float) -> Node:
    """Elementwise min(a, c); zero gradient on the clipped side and at a == c."""
    c = float(c)
    av = a.value
    mask = av < c
    return a.graph._register(
        "clip_min_const", np.minimum(av, c), (a,), (lambda gr: gr * mask,)
    )


def clip_max_const(a: Node, c: float) -> Node:
    """Elementwise max(a, c); zero gradient on the clipped side and at a == c."""
    c = float(c)
    av = a.value
    mask = av > c
    return a.graph._register(
        "clip_max_const", np.maximum(av, c), (a,), (lambda gr: gr * mask,)
    )


def sum(a: Node) -> Node:  # noqa: A001 - mirrors the engine's public op name
    av = a.value
    return a.graph._register(
        "sum", np.sum(av), (a,), (lambda gr: np.full(av.shape, float(gr)),)
    )


def mean(a: Node) -> Node:
    av = a.value
    n = av.size
    return a.graph._register(
        "mean", np.mean(av), (a,), (lambda gr: np.full(av.shape, float(gr) / n),)
    )


def sq_l2(a: Node) -> Node:
    """Sum of squared entries (squared L2 norm)."""
    av = a.value
    return a.graph._register("sq_l2", np.sum(av * av), (a,), (lambda gr: gr * 2.0 * av,))


def max_abs(a: Node) -> Node:
    """Hard L-inf norm; gradient routed to the first argmax element only."""
    av = a.value
    flat = np.abs(av.reshape(-1))
    idx = int(np.argmax(flat))
    value = np.asarray(flat[idx])

    def vjp(gr):
        out = np.zeros(av.size)
        out[idx] = np.sign(av.reshape(-1)[idx]) * float(gr)
        return out.reshape(av.shape)

    return a.graph._register("max_abs", value, (a,), (vjp,))


def cross_entropy_logits(a: Node, label: int) -> Node:
    """Softmax cross-entropy of a logit vector against one class index."""
    av = a.value
    if av.ndim != 1:
        raise ShapeError(f"cross_entropy_logits expects a logit vector, got {av.shape}")
    label = int(label)
    if not 0 <= label < av.size:
        raise ValueError(f"label {label} out of range for {av.size} classes")
    m = np.max(av)
    exps = np.exp(av - m)
    z = np.sum(exps)
    value = np.asarray(np.log(z) + m - av[label])
    softmax = exps / z

    def vjp(gr):
        out = softmax.copy()
        out[label] -= 1.0
        return out * float(gr)

    return a.graph._register("cross_entropy", value, (a,), (vjp,))


def hard_gate(a: Node, tau: float) -> Node:
    """Straight-through threshold: forward is 1[a >= tau], backward is identity.

    A training-time estimator, not a true derivative; the attack never uses it.
    """
    tau = float(tau)
    value = (a.value >= tau).astype(np.float64)
    return a.graph._register("hard_gate", value, (a,), (lambda gr: gr,))
