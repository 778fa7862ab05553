"""Reverse-mode autodiff over dense float64 numpy arrays.

Small on purpose: only the operations the matching network, the
discriminator and the losses need. Every op records its parents as a
tuple, so graph traversal order (and therefore gradient accumulation
order) is identical from run to run.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=DTYPE)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    # ------------------------------------------------------------------
    # bookkeeping
    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}{tag})"

    def backward(self, grad=None):
        """Run reverse-mode accumulation from this node.

        Topological order is built iteratively (deep graphs would blow the
        recursion limit) and depends only on graph construction order.
        """
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accum(_as_array(grad))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------
    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(np.add(self.data, other.data), (self, other))

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.data.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(-g)

        out._backward = bwd
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(np.multiply(self.data, other.data), (self, other))

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = _node(self.data / other.data, (self, other))

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(-g * self.data / (other.data ** 2), other.data.shape))

        out._backward = bwd
        return out

    def __pow__(self, p):
        assert isinstance(p, (int, float))
        out = _node(self.data ** p, (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g * p * self.data ** (p - 1))

        out._backward = bwd
        return out

    def matmul(self, other: "Tensor", exact: bool = False) -> "Tensor":
        """Matrix product; last two axes contract, leading axes broadcast.

        `exact=True` routes 2-d products through einsum's non-BLAS kernel,
        whose per-element reduction order does not depend on the number of
        rows, so scoring a batch and scoring row-by-row agree bit for bit.
        """
        other = other if isinstance(other, Tensor) else Tensor(other)
        if exact and self.data.ndim == 2 and other.data.ndim == 2:
            val = np.einsum("ij,jk->ik", self.data, other.data)
        else:
            val = np.matmul(self.data, other.data)
        out = _node(val, (self, other))

        def bwd(g):
            if self.requires_grad:
                if exact and g.ndim == 2 and other.data.ndim == 2:
                    ga = np.einsum("ik,jk->ij", g, other.data)
                else:
                    ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accum(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                if exact and g.ndim == 2 and self.data.ndim == 2:
                    gb = np.einsum("ij,ik->jk", self.data, g)
                else:
                    gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accum(_unbroadcast(gb, other.data.shape))

        out._backward = bwd
        return out

    def __matmul__(self, other):
        return self.matmul(other)

    # ------------------------------------------------------------------
    # elementwise nonlinear
    # ------------------------------------------------------------------
    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g * (self.data > 0.0))

        out._backward = bwd
        return out

    def exp(self):
        val = np.exp(self.data)
        out = _node(val, (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g * val)

        out._backward = bwd
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g / self.data)

        out._backward = bwd
        return out

    def abs(self):
        out = _node(np.abs(self.data), (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g * np.sign(self.data))

        out._backward = bwd
        return out

    # ------------------------------------------------------------------
    # shape ops
    # ------------------------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out = _node(self.data.reshape(shape), (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(g.reshape(src_shape))

        out._backward = bwd
        return out

    def swap_last_axes(self):
        out = _node(np.swapaxes(self.data, -1, -2), (self,))

        def bwd(g):
            if self.requires_grad:
                self._accum(np.swapaxes(g, -1, -2))

        out._backward = bwd
        return out

    def narrow(self, axis: int, start: int, length: int) -> "Tensor":
        """Contiguous slice along one axis."""
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)
        out = _node(self.data[idx], (self,))

        def bwd(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[idx] = g
                self._accum(full)

        out._backward = bwd
        return out

    def pad_axis(self, axis: int, before: int, after: int) -> "Tensor":
        pads = [(0, 0)] * self.data.ndim
        pads[axis] = (before, after)
        out = _node(np.pad(self.data, pads), (self,))
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(before, before + self.data.shape[axis])
        idx = tuple(idx)

        def bwd(g):
            if self.requires_grad:
                self._accum(g[idx])

        out._backward = bwd
        return out

    # ------------------------------------------------------------------
    # reductions
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        src_shape = self.data.shape

        def bwd(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accum(np.broadcast_to(g, src_shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, src_shape).copy())

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ------------------------------------------------------------------
    # gathers
    # ------------------------------------------------------------------
    def take_rows(self, index: np.ndarray) -> "Tensor":
        index = np.asarray(index, dtype=np.intp)
        out = _node(self.data[index], (self,))

        def bwd(g):
            if self.requires_grad:
                acc = np.zeros_like(self.data)
                np.add.at(acc, index, g)
                self._accum(acc)

        out._backward = bwd
        return out


def _node(value: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(value)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g):
        start = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, start + size)
                t._accum(g[tuple(idx)])
            start += size

    out._backward = bwd
    return out


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather from a 2-d table; scatter-add on the way back."""
    indices = np.asarray(indices, dtype=np.intp)
    out = _node(table.data[indices], (table,))

    def bwd(g):
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, indices.reshape(-1), g.reshape(-1, table.data.shape[1]))
            table._accum(acc)

    out._backward = bwd
    return out


def masked_softmax(scores: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax that gives exactly zero weight to masked positions.

    Masked entries are replaced by -inf before the shifted exp, so they
    neither overflow nor leak probability mass. Rows whose mask is all
    zero are a caller error and will produce NaN.
    """
    mask = np.asarray(mask, dtype=bool)
    neg = np.where(mask, scores.data, -np.inf)
    shift = neg.max(axis=axis, keepdims=True)
    expd = np.exp(neg - shift)
    denom = expd.sum(axis=axis, keepdims=True)
    probs = expd / denom
    out = _node(probs, (scores,))

    def bwd(g):
        if scores.requires_grad:
            inner = (g * probs).sum(axis=axis, keepdims=True)
            scores._accum(probs * (g - inner))

    out._backward = bwd
    return out


def masked_max(x: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Max over one axis, ignoring masked positions (ties go to the first)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=axis).all():
        raise ValueError("masked_max: at least one position per row must be unmasked")
    filled = np.where(mask, x.data, -np.inf)
    arg = filled.argmax(axis=axis)
    val = np.take_along_axis(filled, np.expand_dims(arg, axis), axis=axis).squeeze(axis)
    out = _node(val, (x,))

    def bwd(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.put_along_axis(
                acc, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis
            )
            x._accum(acc)

    out._backward = bwd
    return out


def logsumexp(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """log(sum(exp(x))) with max-subtraction for stability."""
    shift = x.data.max(axis=axis, keepdims=True)
    expd = np.exp(x.data - shift)
    total = expd.sum(axis=axis, keepdims=True)
    val = np.log(total) + shift
    if not keepdims:
        val = np.squeeze(val, axis=axis) if axis is not None else val.reshape(())
    out = _node(val, (x,))
    soft = expd / total

    def bwd(g):
        if x.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            elif axis is None and not keepdims:
                g = np.asarray(g).reshape((1,) * x.data.ndim)
            x._accum(g * soft)

    out._backward = bwd
    return out


def global_norm(arrays) -> float:
    total = 0.0
    for a in arrays:
        total += float(np.sum(a * a))
    return float(np.sqrt(total))
