"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for this model family: dense linear algebra,
elementwise trig/activations, concatenation, row gather/scatter and a
masked softmax. Gradients are accumulated only on leaf tensors created
with ``requires_grad=True`` (parameters); repeated backward passes
through a shared subgraph are safe because per-call accumulation happens
in a local table.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation / replay)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An ndarray plus (optionally) the recipe that produced it.

    ``_vjp(g)`` yields ``(parent, parent_grad)`` pairs; parents without a
    recorded recipe and without ``requires_grad`` terminate the sweep.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, name=None, parents=(), vjp=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, no graph, no grad."""
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, grad={'yes' if self.requires_grad else 'no'})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; divide by a scalar")
        return mul(self, 1.0 / other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)


def _node(data, parents, vjp) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents):
        return Tensor(data, parents=parents, vjp=vjp)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        yield a, _unbroadcast(g, a.data.shape)
        yield b, _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        yield a, _unbroadcast(g * b.data, a.data.shape)
        yield b, _unbroadcast(g * a.data, b.data.shape)

    return _node(out, (a, b), vjp)


def matmul(x, w) -> Tensor:
    """``x @ w`` with ``w`` 2D of shape (k, n) and ``x`` of shape (..., k)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2:
        raise ValueError(f"matmul weight must be 2D, got shape {w.shape}")
    out = x.data @ w.data

    def vjp(g):
        yield x, g @ w.data.T
        k = w.data.shape[0]
        yield w, x.data.reshape(-1, k).T @ g.reshape(-1, w.data.shape[1])

    return _node(out, (x, w), vjp)


# -- shape manipulation --------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        yield a, g.reshape(a.data.shape)

    return _node(out, (a,), vjp)


def moveaxis(a, src, dst) -> Tensor:
    a = as_tensor(a)
    out = np.moveaxis(a.data, src, dst)

    def vjp(g):
        yield a, np.moveaxis(g, dst, src)

    return _node(out, (a,), vjp)


def concat(parts, axis=-1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            yield p, g[tuple(idx)]

    return _node(out, tuple(parts), vjp)


def stack(parts, axis=-1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=axis)

    def vjp(g):
        slabs = np.moveaxis(g, axis, 0)
        for p, slab in zip(parts, slabs):
            yield p, slab

    return _node(out, tuple(parts), vjp)


def narrow(a, start, length) -> Tensor:
    """Slice ``[start, start+length)`` along the last axis."""
    a = as_tensor(a)
    out = a.data[..., start : start + length]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[..., start : start + length] = g
        yield a, full

    return _node(out, (a,), vjp)


def gather_rows(a, idx) -> Tensor:
    """Select rows ``a[idx]`` along axis 0; backward scatters with accumulation."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        yield a, full

    return _node(out, (a,), vjp)


def scatter_rows(base, idx, rows) -> Tensor:
    """Copy of ``base`` with ``rows`` written at positions ``idx`` (axis 0)."""
    base, rows = as_tensor(base), as_tensor(rows)
    idx = np.asarray(idx, dtype=np.int64)
    out = base.data.copy()
    out[idx] = rows.data

    def vjp(g):
        gb = g.copy()
        gb[idx] = 0.0
        yield base, gb
        yield rows, g[idx]

    return _node(out, (base, rows), vjp)


# -- reductions -----------------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            yield a, np.broadcast_to(g, a.data.shape).copy()
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            yield a, np.broadcast_to(gg, a.data.shape).copy()

    return _node(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- elementwise nonlinearities -------------------------------------------

def _elementwise(a, fwd, dfwd):
    a = as_tensor(a)
    out = fwd(a.data)

    def vjp(g):
        yield a, g * dfwd(a.data, out)

    return _node(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _elementwise(a, fwd, lambda x, y: y * (1.0 - y))


def tanh(a) -> Tensor:
    return _elementwise(a, np.tanh, lambda x, y: 1.0 - y * y)


def relu(a) -> Tensor:
    return _elementwise(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(x.dtype))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), overflow-safe; derivative is the logistic function."""

    def dfwd(x, y):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _elementwise(a, lambda x: np.logaddexp(0.0, x), dfwd)


def exp(a) -> Tensor:
    return _elementwise(a, np.exp, lambda x, y: y)


def log(a) -> Tensor:
    return _elementwise(a, np.log, lambda x, y: 1.0 / x)


def cos(a) -> Tensor:
    return _elementwise(a, np.cos, lambda x, y: -np.sin(x))


def sin(a) -> Tensor:
    return _elementwise(a, np.sin, lambda x, y: np.cos(x))


def masked_softmax(scores, mask) -> Tensor:
    """Softmax over the last axis restricted to ``mask``-true slots.

    Masked slots get weight exactly 0.0; rows with no unmasked slot come
    out all-zero instead of NaN.
    """
    scores = as_tensor(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.data.shape:
        raise ValueError(f"mask shape {mask.shape} != scores shape {scores.data.shape}")
    x = np.where(mask, scores.data, -np.inf)
    mx = np.max(x, axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)  # all-masked rows
    e = np.exp(x - mx)
    e = np.where(mask, e, 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    alpha = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def vjp(g):
        dot = (g * alpha).sum(axis=-1, keepdims=True)
        yield scores, alpha * (g - dot)

    return _node(alpha, (scores,), vjp)


# -- reverse sweep ---------------------------------------------------------

def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for grad-requiring leaves.

    Uses a per-call accumulation table, so differentiating two losses that
    share a subgraph does not cross-contaminate.
    """
    if seed is None:
        if root.data.size != 1:
            raise ValueError("backward() without a seed gradient requires a scalar root")
        seed = np.ones_like(root.data)

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack_.append((p, False))

    table: dict[int, np.ndarray] = {id(root): np.asarray(seed, dtype=root.data.dtype)}
    for node in reversed(topo):
        g = table.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is not None:
            for parent, pg in node._vjp(g):
                key = id(parent)
                if key in table:
                    table[key] = table[key] + pg
                else:
                    table[key] = pg
        elif node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
