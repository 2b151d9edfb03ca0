"""Float64 array math with reverse-mode differentiation on a small op set.

Values are plain numpy arrays; anything that needs a gradient is wrapped in
a :class:`Node`. Every op accepts a mix of nodes and arrays and returns a
node only when at least one input is a node, so the same model code runs
traced (training, gradient checks) or untraced (inference) with no tape
overhead in the untraced case.

All math is float64. Op outputs are checked for NaN/Inf and a
:class:`NonFiniteError` is raised instead of letting bad values propagate.

Subgradient conventions at non-smooth points:

* ``reduce_max`` / ``reduce_min`` route the full gradient to the first
  (lowest-index) extremal element.
* ``median`` routes the gradient to the selected middle element for odd
  counts and splits it 0.5/0.5 over the two middle elements for even counts.
* ``relu`` uses derivative 0 at exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionError,
    GraphError,
    NonFiniteError,
    ParameterError,
)

__all__ = [
    "Node",
    "as_tensor",
    "value_of",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "narrow",
    "exp",
    "log",
    "relu",
    "reduce_sum",
    "sorted_sum",
    "reduce_max",
    "reduce_min",
    "median",
    "softmax",
    "normalize",
    "cosine_similarity",
    "fd_check",
    "FdReport",
    "FdParamResult",
]


def as_tensor(data, dtype=np.float64) -> np.ndarray:
    """Coerce to a contiguous array of ``dtype``, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("non-finite values in tensor input")
    return arr


class Node:
    """A tensor in a reverse-mode graph.

    ``value`` holds the forward result; ``grad`` is filled by
    :func:`backward`. Parents and the vjp closure are fixed at construction,
    so graphs are acyclic by construction and nodes are never mutated after
    creation apart from gradient accumulation during a backward pass.
    """

    __slots__ = ("value", "grad", "parents", "vjp", "op")

    def __init__(self, value, parents=(), vjp=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def value_of(x) -> np.ndarray:
    """The underlying array of a node, or the input coerced to float64."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


_F64 = np.float64
_F64D = np.dtype(np.float64)


def _out(value, op: str) -> np.ndarray:
    # hot path: the self dot product of a finite array can only be finite
    # or overflow to +Inf, while any NaN/Inf entry forces it non-finite,
    # so one BLAS reduce screens the call and the exact elementwise check
    # runs only on the rare non-finite screen result
    if type(value) is not np.ndarray:
        value = np.asarray(value)
    flat = value.ravel()
    if not flat.dot(flat) < math.inf and not np.isfinite(value).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    return value


def _traced(*xs) -> bool:
    return any(isinstance(x, Node) for x in xs)


def _toposort(root: Node) -> list[Node]:
    # Iterative DFS. The on-stack marker catches cyclic graphs built by
    # hand-rolled closures before the backward pass can loop forever.
    order: list[Node] = []
    visited: set[int] = set()
    on_stack: set[int] = set()
    stack: list[list] = [[root, 0]]
    while stack:
        frame = stack[-1]
        node, child_idx = frame
        nid = id(node)
        if child_idx == 0:
            if nid in on_stack:
                raise GraphError("cycle detected in computation graph")
            if nid in visited:
                stack.pop()
                continue
            on_stack.add(nid)
        node_parents = [p for p in node.parents if isinstance(p, Node)]
        if child_idx < len(node_parents):
            frame[1] = child_idx + 1
            stack.append([node_parents[child_idx], 0])
        else:
            stack.pop()
            on_stack.discard(nid)
            visited.add(nid)
            order.append(node)
    return order


def backward(root: Node) -> None:
    """Propagate gradients from a scalar root to every reachable node.

    Gradients accumulate additively across fan-out. Gradients left over
    from a previous pass through the same graph are cleared first.
    """
    if not isinstance(root, Node):
        raise GraphError("backward root must be a Node")
    if root.value.size != 1:
        raise GraphError(
            f"backward root must be scalar, got shape {root.value.shape}"
        )
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None or not isinstance(parent, Node):
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    grad = np.asarray(grad)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    an, bn = isinstance(a, Node), isinstance(b, Node)
    av = a.value if an else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if bn else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    out = _out(av + bv, "add")
    if not (an or bn):
        return out

    def vjp(g):
        return (
            _unbroadcast(g, av.shape) if an else None,
            _unbroadcast(g, bv.shape) if bn else None,
        )

    return Node(out, (a, b), vjp, "add")


def sub(a, b):
    an, bn = isinstance(a, Node), isinstance(b, Node)
    av = a.value if an else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if bn else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    out = _out(av - bv, "sub")
    if not (an or bn):
        return out

    def vjp(g):
        return (
            _unbroadcast(g, av.shape) if an else None,
            _unbroadcast(-g, bv.shape) if bn else None,
        )

    return Node(out, (a, b), vjp, "sub")


def mul(a, b):
    an, bn = isinstance(a, Node), isinstance(b, Node)
    av = a.value if an else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if bn else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    out = _out(av * bv, "mul")
    if not (an or bn):
        return out

    def vjp(g):
        return (
            _unbroadcast(g * bv, av.shape) if an else None,
            _unbroadcast(g * av, bv.shape) if bn else None,
        )

    return Node(out, (a, b), vjp, "mul")


def div(a, b):
    an, bn = isinstance(a, Node), isinstance(b, Node)
    av = a.value if an else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if bn else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _out(av / bv, "div")
    if not (an or bn):
        return out

    def vjp(g):
        return (
            _unbroadcast(g / bv, av.shape) if an else None,
            _unbroadcast(-g * av / (bv * bv), bv.shape) if bn else None,
        )

    return Node(out, (a, b), vjp, "div")


def neg(x):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    out = _out(-xv, "neg")
    if not xn:
        return out
    return Node(out, (x,), lambda g: (-g,), "neg")


# ---------------------------------------------------------------------------
# linear algebra and shape plumbing


def matmul(a, b):
    """Matrix product with standard batch broadcasting on leading axes."""
    an, bn = isinstance(a, Node), isinstance(b, Node)
    av = a.value if an else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if bn else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    if av.ndim < 2 or bv.ndim < 2:
        raise DimensionError(
            f"matmul expects operands with ndim >= 2, got {av.ndim} and {bv.ndim}"
        )
    if av.shape[-1] != bv.shape[-2]:
        raise DimensionError(
            f"matmul inner extents differ: {av.shape} x {bv.shape}"
        )
    out = _out(av @ bv, "matmul")
    if not (an or bn):
        return out

    def vjp(g):
        ga = gb = None
        if an:
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        if bn:
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return Node(out, (a, b), vjp, "matmul")


def transpose(x, axes=None):
    """Permute axes; with no ``axes`` the last two are swapped."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    if axes is None:
        if xv.ndim < 2:
            raise DimensionError("default transpose needs ndim >= 2")
        axes = tuple(range(xv.ndim - 2)) + (xv.ndim - 1, xv.ndim - 2)
    out = _out(np.transpose(xv, axes), "transpose")
    if not xn:
        return out
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return Node(out, (x,), vjp, "transpose")


def reshape(x, shape):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    try:
        out = _out(xv.reshape(shape), "reshape")
    except ValueError as e:
        raise DimensionError(f"cannot reshape {xv.shape} to {shape}") from e
    if not xn:
        return out

    def vjp(g):
        return (np.reshape(g, xv.shape),)

    return Node(out, (x,), vjp, "reshape")


def concat(parts, axis=0):
    """Concatenate a sequence of tensors along ``axis``."""
    parts = list(parts)
    if not parts:
        raise ParameterError("concat needs at least one input")
    values = [
        p.value if isinstance(p, Node)
        else (p if type(p) is np.ndarray and p.dtype is _F64D
              else np.asarray(p, dtype=_F64))
        for p in parts
    ]
    try:
        out = _out(np.concatenate(values, axis=axis), "concat")
    except ValueError as e:
        raise DimensionError(f"concat shapes incompatible: {e}") from e
    if not _traced(*parts):
        return out
    sizes = [v.shape[axis] for v in values]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        grads = []
        for part, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(part, Node):
                index = [slice(None)] * g.ndim
                index[axis] = slice(int(start), int(stop))
                grads.append(g[tuple(index)])
            else:
                grads.append(None)
        return tuple(grads)

    return Node(out, tuple(parts), vjp, "concat")


def narrow(x, axis, start, stop):
    """Slice the half-open range [start, stop) along one axis."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    if not 0 <= start < stop <= xv.shape[axis]:
        raise ParameterError(
            f"narrow range [{start}, {stop}) invalid for axis of extent "
            f"{xv.shape[axis]}"
        )
    index = [slice(None)] * xv.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = _out(xv[index], "narrow")
    if not xn:
        return out

    def vjp(g):
        gx = np.zeros_like(xv)
        gx[index] = g
        return (gx,)

    return Node(out, (x,), vjp, "narrow")


# ---------------------------------------------------------------------------
# nonlinearities


def exp(x):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    with np.errstate(over="ignore"):
        out = _out(np.exp(xv), "exp")
    if not xn:
        return out

    def vjp(g):
        return (g * out,)

    return Node(out, (x,), vjp, "exp")


def log(x):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _out(np.log(xv), "log")
    if not xn:
        return out

    def vjp(g):
        return (g / xv,)

    return Node(out, (x,), vjp, "log")


def relu(x):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    out = _out(np.maximum(xv, 0.0), "relu")
    if not xn:
        return out
    mask = xv > 0.0

    def vjp(g):
        return (g * mask,)

    return Node(out, (x,), vjp, "relu")


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(x, axis=None, keepdims=False):
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    out = _out(xv.sum(axis=axis, keepdims=keepdims), "reduce_sum")
    if not xn:
        return out

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape),)

    return Node(out, (x,), vjp, "reduce_sum")


def sorted_sum(x, axis):
    """Sum along ``axis`` after sorting, so the result is bit-for-bit
    invariant to permutations of the input along that axis.

    The gradient is the same as for a plain sum.
    """
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    out = _out(np.sort(xv, axis=axis).sum(axis=axis), "sorted_sum")
    if not xn:
        return out

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(np.asarray(g), axis), xv.shape),)

    return Node(out, (x,), vjp, "sorted_sum")


def reduce_max(x, axis):
    """Maximum along ``axis``; the gradient flows to the first maximal
    element only."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    if xv.shape[axis] == 0:
        raise ParameterError("reduce_max over an empty axis")
    out = _out(xv.max(axis=axis), "reduce_max")
    if not xn:
        return out
    idx = np.argmax(xv, axis=axis)

    def vjp(g):
        gx = np.zeros_like(xv)
        np.put_along_axis(
            gx, np.expand_dims(idx, axis), np.expand_dims(np.asarray(g), axis), axis
        )
        return (gx,)

    return Node(out, (x,), vjp, "reduce_max")


def reduce_min(x, axis):
    """Minimum along ``axis``; the gradient flows to the first minimal
    element only."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    if xv.shape[axis] == 0:
        raise ParameterError("reduce_min over an empty axis")
    out = _out(xv.min(axis=axis), "reduce_min")
    if not xn:
        return out
    idx = np.argmin(xv, axis=axis)

    def vjp(g):
        gx = np.zeros_like(xv)
        np.put_along_axis(
            gx, np.expand_dims(idx, axis), np.expand_dims(np.asarray(g), axis), axis
        )
        return (gx,)

    return Node(out, (x,), vjp, "reduce_min")


def median(x, axis=0):
    """Median along ``axis``: middle order statistic for odd counts, the
    midpoint of the two middle order statistics for even counts."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    n = xv.shape[axis]
    if n == 0:
        raise ParameterError("median over an empty axis")
    mid = n // 2
    if xn:
        # the selection indices are only needed to route the gradient
        order = np.argsort(xv, axis=axis, kind="stable")
        sorted_vals = np.take_along_axis(xv, order, axis=axis)
    else:
        sorted_vals = np.sort(xv, axis=axis)
    if n % 2:
        out = np.take(sorted_vals, mid, axis=axis)
    else:
        lo = np.take(sorted_vals, mid - 1, axis=axis)
        hi = np.take(sorted_vals, mid, axis=axis)
        out = 0.5 * (lo + hi)
    out = _out(out, "median")
    if not xn:
        return out

    def vjp(g):
        g = np.asarray(g)
        gx = np.zeros_like(xv)
        positions = (mid,) if n % 2 else (mid - 1, mid)
        share = 1.0 if n % 2 else 0.5
        for pos in positions:
            sel = np.expand_dims(np.take(order, pos, axis=axis), axis)
            current = np.take_along_axis(gx, sel, axis=axis)
            np.put_along_axis(
                gx, sel, current + share * np.expand_dims(g, axis), axis
            )
        return (gx,)

    return Node(out, (x,), vjp, "median")


# ---------------------------------------------------------------------------
# composite primitives


def softmax(x, axis=-1, temperature=1.0):
    """Temperature softmax along ``axis``.

    Computed in stabilized form (max subtraction), so any finite input is
    safe. ``temperature`` must be strictly positive.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    scaled = xv if temperature == 1.0 else xv / temperature
    scaled = scaled - scaled.max(axis=axis, keepdims=True)
    e = np.exp(scaled)
    out = _out(e / e.sum(axis=axis, keepdims=True), "softmax")
    if not xn:
        return out

    def vjp(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return ((g - inner) * out / temperature,)

    return Node(out, (x,), vjp, "softmax")


def normalize(x, axis=-1):
    """Scale to unit L2 norm along ``axis``. Zero norm is an error, not a
    silent passthrough."""
    xn = isinstance(x, Node)
    xv = x.value if xn else (

        x if type(x) is np.ndarray and x.dtype is _F64D

        else np.asarray(x, dtype=_F64))
    norm = np.sqrt((xv * xv).sum(axis=axis, keepdims=True))
    if (norm == 0.0).any():
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    out = _out(xv / norm, "normalize")
    if not xn:
        return out

    def vjp(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return ((g - out * inner) / norm,)

    return Node(out, (x,), vjp, "normalize")


def cosine_similarity(a, b):
    """Cosine of the angle between two 1-d vectors, clipped to [-1, 1].

    The clip only absorbs float roundoff for near-parallel vectors; the
    gradient is that of the exact quotient.
    """
    a_node, b_node = isinstance(a, Node), isinstance(b, Node)
    av = a.value if a_node else (

        a if type(a) is np.ndarray and a.dtype is _F64D

        else np.asarray(a, dtype=_F64))
    bv = b.value if b_node else (

        b if type(b) is np.ndarray and b.dtype is _F64D

        else np.asarray(b, dtype=_F64))
    if av.ndim != 1 or bv.ndim != 1 or av.shape != bv.shape:
        raise DimensionError(
            f"cosine_similarity expects two 1-d vectors of equal length, "
            f"got shapes {av.shape} and {bv.shape}"
        )
    na = math.sqrt(av @ av)
    nb = math.sqrt(bv @ bv)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    raw = float(av @ bv / (na * nb))
    if not math.isfinite(raw):
        raise NonFiniteError("cosine_similarity produced non-finite values")
    out = np.asarray(min(1.0, max(-1.0, raw)))
    if not (a_node or b_node):
        return out
    an = av / na
    bn = bv / nb
    c = float(an @ bn)

    def vjp(g):
        return (
            g * (bn - c * an) / na if a_node else None,
            g * (an - c * bn) / nb if b_node else None,
        )

    return Node(out, (a, b), vjp, "cosine_similarity")


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass(frozen=True)
class FdParamResult:
    """Gradient agreement for one named parameter."""

    name: str
    max_rel_error: float
    max_abs_error: float
    worst_index: tuple
    passed: bool


@dataclass(frozen=True)
class FdReport:
    """Outcome of a finite-difference gradient check."""

    results: tuple
    step: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    def __str__(self) -> str:
        width = max((len(r.name) for r in self.results), default=4)
        lines = [
            f"{r.name:<{width}}  rel={r.max_rel_error:.3e}  "
            f"abs={r.max_abs_error:.3e}  {'ok' if r.passed else 'FAIL'}"
            for r in self.results
        ]
        verdict = "passed" if self.passed else "FAILED"
        lines.append(
            f"gradient check {verdict} (step={self.step:g}, "
            f"tolerance={self.tolerance:g})"
        )
        return "\n".join(lines)


def fd_check(f, params, step=1e-5, tolerance=1e-4, rel_floor=1e-6):
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` maps a dict of named tensors to a scalar and must accept both
    nodes and plain arrays, so the one callable serves the traced and the
    untraced evaluations. Central differences are taken coordinate by
    coordinate at the given ``step``. Relative error is measured against
    ``max(|analytic|, |numeric|, rel_floor)``, so near-zero gradients are
    effectively judged on absolute error.
    """
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step}")
    if tolerance <= 0:
        raise ParameterError(f"tolerance must be positive, got {tolerance}")
    if not params:
        raise ParameterError("fd_check needs at least one parameter")

    leaves = {name: Node(as_tensor(arr)) for name, arr in params.items()}
    root = f(leaves)
    if not isinstance(root, Node):
        raise GraphError("objective did not return a Node over node inputs")
    if root.value.size != 1:
        raise GraphError(
            f"objective must be scalar, got shape {root.value.shape}"
        )
    backward(root)
    analytic = {
        name: (
            leaves[name].grad
            if leaves[name].grad is not None
            else np.zeros_like(leaves[name].value)
        )
        for name in params
    }

    work = {name: as_tensor(arr).copy() for name, arr in params.items()}

    def eval_at() -> float:
        value = value_of(f(work))
        if value.size != 1:
            raise GraphError("objective must be scalar")
        v = float(value)
        if not np.isfinite(v):
            raise NonFiniteError("non-finite objective during finite differencing")
        return v

    results = []
    for name, arr in work.items():
        flat = arr.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = eval_at()
            flat[i] = orig - step
            f_minus = eval_at()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * step)
        numeric = numeric.reshape(arr.shape)
        ana = analytic[name]
        abs_err = np.abs(ana - numeric)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(numeric)), rel_floor)
        rel = abs_err / denom
        worst = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else ()
        max_rel = float(rel.max()) if rel.size else 0.0
        results.append(
            FdParamResult(
                name=name,
                max_rel_error=max_rel,
                max_abs_error=float(abs_err.max()) if abs_err.size else 0.0,
                worst_index=tuple(int(i) for i in worst),
                passed=max_rel <= tolerance,
            )
        )
    return FdReport(tuple(results), step, tolerance)
