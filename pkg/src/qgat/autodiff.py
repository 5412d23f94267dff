"""Minimal reverse-mode autodiff over numpy arrays.

A ``Tensor`` wraps a float64 ndarray and records the ops that produced it.
``Tensor.backward`` walks the tape in reverse topological order and
accumulates vector-Jacobian products into ``.grad`` of every reachable
tensor with ``requires_grad`` set.  Ops never mutate their inputs.

Two properties matter for callers:

* graph nodes are only recorded when some input requires a gradient, so
  evaluation-mode forward passes carry no tape overhead;
* ``segment_sum`` accumulates each segment in value-sorted order, which
  makes the result independent of the order rows appear in -- required
  for bit-exact permutation equivariance of neighborhood aggregation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Vjp | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate ``seed`` (defaults to ones) from this tensor."""
        if seed is None:
            seed = np.ones_like(self.data)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.data.shape:
            raise ValueError(f"seed shape {seed.shape} != tensor shape {self.data.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = seed if self.grad is None else self.grad + seed
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: tuple[Tensor, ...], vjp: Vjp) -> Tensor:
    """Record an op node; constant-folds when no parent needs gradients."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- arithmetic --------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return make_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return make_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return make_op(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return make_op(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    return make_op(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


# -- elementwise nonlinearities ---------------------------------------


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    return make_op(out_data, (x,), lambda g: (g * out_data,))


def log(x: Tensor) -> Tensor:
    return make_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softplus(x: Tensor) -> Tensor:
    return make_op(np.logaddexp(0.0, x.data), (x,), lambda g: (g * _sigmoid(x.data),))


def elu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out_data = np.where(pos, x.data, np.expm1(np.minimum(x.data, 0.0)))
    return make_op(out_data, (x,), lambda g: (g * np.where(pos, 1.0, out_data + 1.0),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make_op(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope)
    return make_op(x.data * scale, (x,), lambda g: (g * scale,))


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)
    return make_op(out_data, (x,), lambda g: (g * (1.0 - out_data * out_data),))


# -- reductions and shape ops ------------------------------------------


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def vjp(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, x.data.shape).copy(),)

    return make_op(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp)


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), Tensor(1.0 / n))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return make_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.data.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return make_op(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def vjp(g: np.ndarray):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return make_op(x.data[:, start:stop].copy(), (x,), vjp)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx)

    def vjp(g: np.ndarray):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_op(x.data[idx], (x,), vjp)


# -- segment ops --------------------------------------------------------


def _sorted_segment_sum(values: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    """Per-segment sums with value-sorted accumulation order.

    Sorting addends by value before reduction makes each segment's sum a
    function of the multiset of values only, so reordering rows (e.g.
    relabeling graph nodes) reproduces results bit-exactly.
    """
    cols = 1 if values.ndim == 1 else int(np.prod(values.shape[1:]))
    flat = values.reshape(values.shape[0], cols)
    group = (seg[:, None] * cols + np.arange(cols)[None, :]).ravel()
    vals = flat.ravel()
    order = np.lexsort((vals, group))
    vals_sorted = vals[order]
    group_sorted = group[order]
    out = np.zeros(n_segments * cols, dtype=values.dtype)
    if vals_sorted.size:
        starts = np.flatnonzero(np.r_[True, group_sorted[1:] != group_sorted[:-1]])
        out[group_sorted[starts]] = np.add.reduceat(vals_sorted, starts)
    return out.reshape((n_segments,) + values.shape[1:])


def segment_sum(x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    seg = np.asarray(seg)
    return make_op(_sorted_segment_sum(x.data, seg, n_segments), (x,), lambda g: (g[seg],))


def segment_max(values: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    """Per-segment maxima (plain numpy; used detached for softmax shifts)."""
    out = np.full((n_segments,) + values.shape[1:], -np.inf, dtype=values.dtype)
    np.maximum.at(out, seg, values)
    return out


def gradcheck(fn: Callable[..., Tensor], tensors: Sequence[Tensor], eps: float = 1e-6,
              rtol: float = 1e-5, atol: float = 1e-8) -> float:
    """Compare tape gradients of ``sum(fn(*tensors))`` against central differences.

    Returns the worst relative error across all inputs; raises AssertionError
    beyond tolerance.  Used by tests and the gradcheck CLI command.
    """
    out = fn(*tensors)
    for t in tensors:
        t.zero_grad()
    out.backward(np.ones_like(out.data))
    worst = 0.0
    for t in tensors:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn(*tensors).data.sum()
            flat[i] = orig - eps
            lo = fn(*tensors).data.sum()
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            err = abs(analytic.ravel()[i] - fd) / max(abs(fd), atol / rtol)
            worst = max(worst, err)
            if err > rtol:
                raise AssertionError(
                    f"gradient mismatch at flat index {i}: analytic={analytic.ravel()[i]}, fd={fd}"
                )
    return worst
