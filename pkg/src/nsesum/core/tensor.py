"""Dense tensors with reverse-mode automatic differentiation.

Tensors are rank-1 or rank-2 float64 arrays. A scalar is a rank-1 tensor of
shape ``(1,)``. Every operation on a tensor that requires a gradient records a
node holding its parents and a closure mapping the upstream gradient to one
gradient per parent. ``Tensor.backward`` walks the reachable nodes in exact
reverse creation order, so each node's gradient is complete before it is
pushed further back.

The graph is rebuilt for every step (sequence lengths vary per example), and a
graph can be walked backward only once.
"""

from __future__ import annotations

import itertools
import threading
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextlib import contextmanager

import numpy as np

# Additive fill applied to masked logits before the exact zeroing.
MASK_FILL = -1e30

_creation = itertools.count()
_local = threading.local()

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""


class NonFiniteError(ValueError):
    """A NaN or infinity entered or left an operation."""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class GraphError(ValueError):
    """Backward was requested on a graph that cannot be walked."""


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on this thread (frozen-parameter inference)."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


class Tensor:
    """A dense float64 array that may take part in a differentiation graph."""

    __slots__ = ("values", "requires_grad", "grad", "name", "_parents", "_backward", "_id",
                 "_consumed")

    def __init__(
        self,
        values: object,
        requires_grad: bool = False,
        *,
        name: str | None = None,
    ) -> None:
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        _check_array(arr)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Backward | None = None
        self._id = next(_creation)
        self._consumed = False

    @classmethod
    def _result(
        cls, values: np.ndarray, parents: tuple[Tensor, ...], backward: Backward
    ) -> Tensor:
        """Wrap an op result, recording the node when any parent needs a gradient."""
        _check_array(values)
        out = cls.__new__(cls)
        out.values = values
        out.name = None
        out._id = next(_creation)
        out._consumed = False
        out.grad = None
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # --- accessors ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.values)

    def detach(self) -> Tensor:
        return Tensor(self.values)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # --- operators ---

    def __add__(self, other: Tensor | float) -> Tensor:
        return add(self, _as_tensor(other))

    def __radd__(self, other: float) -> Tensor:
        return add(_as_tensor(other), self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        return sub(self, _as_tensor(other))

    def __rsub__(self, other: float) -> Tensor:
        return sub(_as_tensor(other), self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, int | float):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        return scale(self, float(other))

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    # --- differentiation ---

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.shape != (1,):
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")
        nodes = _reachable(self)
        if any(node._consumed for node in nodes):
            raise GraphError("graph was already walked by backward; rebuild it first")

        upstream: dict[int, np.ndarray] = {self._id: np.ones(1)}
        for node in sorted(nodes, key=lambda n: n._id, reverse=True):
            node._consumed = True
            g = upstream.pop(node._id, None)
            if g is None:
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.is_leaf:
                    parent.grad += pg
                elif parent._id in upstream:
                    upstream[parent._id] = upstream[parent._id] + pg
                else:
                    upstream[parent._id] = pg


def _check_array(arr: np.ndarray) -> None:
    if arr.ndim not in (1, 2):
        raise ShapeError(f"tensors are rank 1 or 2, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise NonFiniteError(f"non-finite value at flat index {bad} of shape {arr.shape}", bad)


def _as_tensor(x: Tensor | float | np.ndarray) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _reachable(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in seen or node.is_leaf:
            continue
        seen.add(node._id)
        order.append(node)
        stack.extend(p for p in node._parents if p.requires_grad)
    return order


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    if g.shape == shape:
        return g
    if shape == (1,):
        return np.array([g.sum()])
    return g.sum(axis=0)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == (1,) or sb == (1,):
        return
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} do not conform")


# --- elementwise ---


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    return Tensor._result(
        a.values + b.values,
        (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return Tensor._result(
        a.values - b.values,
        (a, b),
        lambda g: (_reduce_to(g, a.shape), -_reduce_to(g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    return Tensor._result(
        a.values * b.values,
        (a, b),
        lambda g: (_reduce_to(g * b.values, a.shape), _reduce_to(g * a.values, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor._result(a.values * c, (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.values)
    return Tensor._result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.values))
    return Tensor._result(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.values)
    return Tensor._result(y, (a,), lambda g: (g * y,))


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; entries at or below ``floor`` (when > 0) are clamped with zero gradient."""
    x = a.values
    if floor > 0.0:
        live = x > floor
        clamped = np.where(live, x, floor)
    else:
        if (x <= 0.0).any():
            bad = int(np.flatnonzero((x <= 0.0).ravel())[0])
            raise NonFiniteError(f"log of non-positive value at flat index {bad}", bad)
        live = np.ones(x.shape, dtype=bool)
        clamped = x
    return Tensor._result(
        np.log(clamped), (a,), lambda g: (np.where(live, g / clamped, 0.0),)
    )


# --- linear algebra ---


def matmul(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.shape, b.shape
    if sa[-1] != sb[0]:
        raise ShapeError(f"matmul: inner dims differ for shapes {sa} and {sb}")
    av, bv = a.values, b.values
    if a.ndim == 2 and b.ndim == 2:
        return Tensor._result(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))
    if a.ndim == 1 and b.ndim == 2:
        return Tensor._result(av @ bv, (a, b), lambda g: (bv @ g, np.outer(av, g)))
    if a.ndim == 2 and b.ndim == 1:
        return Tensor._result(av @ bv, (a, b), lambda g: (np.outer(g, bv), av.T @ g))
    return Tensor._result(
        np.array([av @ bv]), (a, b), lambda g: (g[0] * bv, g[0] * av)
    )


def outer(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"outer: needs two vectors, got shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    return Tensor._result(np.outer(av, bv), (a, b), lambda g: (g @ bv, g.T @ av))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ndim = tensors[0].ndim
    if any(t.ndim != ndim for t in tensors) or axis >= ndim:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
    if ndim == 2:
        other = 1 - axis
        if len({t.shape[other] for t in tensors}) != 1:
            raise ShapeError(
                f"concat: shapes {[t.shape for t in tensors]} differ off axis {axis}"
            )
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor._result(
        np.concatenate([t.values for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def sum(a: Tensor) -> Tensor:  # noqa: A001
    return Tensor._result(
        np.array([a.values.sum()]), (a,), lambda g: (np.full(a.shape, g[0]),)
    )


# --- indexing ---


def gather(a: Tensor, index: Sequence[int] | np.ndarray) -> Tensor:
    """Select entries of a vector or rows of a matrix; gradients scatter-add back."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise ShapeError(f"gather: index out of range for shape {a.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.values)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._result(a.values[idx], (a,), backward)


def row(a: Tensor, i: int) -> Tensor:
    """Row ``i`` of a matrix as a vector."""
    if a.ndim != 2 or not 0 <= i < a.shape[0]:
        raise ShapeError(f"row: no row {i} in shape {a.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.values)
        out[i] = g
        return (out,)

    return Tensor._result(a.values[i].copy(), (a,), backward)


def slice(a: Tensor, start: int, stop: int) -> Tensor:  # noqa: A001
    if a.ndim != 1 or not 0 <= start < stop <= a.shape[0]:
        raise ShapeError(f"slice: [{start}:{stop}] invalid for shape {a.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.values)
        out[start:stop] = g
        return (out,)

    return Tensor._result(a.values[start:stop].copy(), (a,), backward)


def scatter_add(v: Tensor, index: Sequence[int] | np.ndarray, size: int) -> Tensor:
    """Vector of length ``size`` with ``out[index[j]] += v[j]``."""
    idx = np.asarray(index, dtype=np.int64)
    if v.ndim != 1 or idx.shape != v.shape:
        raise ShapeError(f"scatter_add: index shape {idx.shape} vs values {v.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ShapeError(f"scatter_add: index out of range for size {size}")
    out = np.zeros(size)
    np.add.at(out, idx, v.values)
    return Tensor._result(out, (v,), lambda g: (g[idx],))


# --- normalization ---


def masked_softmax(logits: Tensor, mask: Sequence[bool] | np.ndarray | None = None) -> Tensor:
    """Softmax over unmasked positions; masked positions are exactly zero."""
    if logits.ndim != 1:
        raise ShapeError(f"masked_softmax: needs a vector, got shape {logits.shape}")
    if mask is None:
        live = np.ones(logits.shape, dtype=bool)
    else:
        live = np.asarray(mask, dtype=bool)
        if live.shape != logits.shape:
            raise ShapeError(
                f"masked_softmax: mask shape {live.shape} vs logits shape {logits.shape}"
            )
    if not live.any():
        raise ValueError("masked_softmax: every position is masked")
    shifted = np.where(live, logits.values, MASK_FILL)
    e = np.exp(shifted - shifted.max())
    e[~live] = 0.0
    p = e / e.sum()

    return Tensor._result(p, (logits,), lambda g: (p * (g - g @ p),))


# --- gradient checking ---


def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients of ``f``."""
    x = Tensor(point.values, requires_grad=True)
    out = f(x)
    out.backward()
    analytic = x.grad.copy()

    base = point.values.copy()
    numeric = np.zeros_like(base)
    with no_grad():
        for i in range(base.size):
            numeric.flat[i] = _central_difference(lambda b: f(Tensor(b)), base, base, i, eps)
    return _max_relative_error(analytic, numeric)


def grad_check_parameters(
    loss_fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5
) -> float:
    """Like :func:`grad_check`, but perturbs parameter tensors in place."""
    params = list(params)
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    worst = 0.0
    with no_grad():
        for p in params:
            analytic = p.grad.copy()
            numeric = np.zeros_like(p.values)
            original = p.values.copy()
            for i in range(original.size):
                numeric.flat[i] = _central_difference(
                    lambda _: loss_fn(), p.values, original, i, eps
                )
            p.values[...] = original
            worst = max(worst, _max_relative_error(analytic, numeric))
            p.zero_grad()
    return worst


def _central_difference(
    evaluate: Callable[[np.ndarray], Tensor],
    target: np.ndarray,
    original: np.ndarray,
    i: int,
    eps: float,
) -> float:
    results = []
    for step in (eps, -eps):
        shifted = target if target is not original else original.copy()
        shifted[...] = original
        shifted.flat[i] += step
        try:
            value = evaluate(shifted).item()
        except NonFiniteError as e:
            raise NonFiniteError(f"non-finite intermediate at coordinate {i}", i) from e
        if not np.isfinite(value):
            raise NonFiniteError(f"non-finite intermediate at coordinate {i}", i)
        results.append(value)
    target[...] = original
    return (results[0] - results[1]) / (2.0 * eps)


def _max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))
