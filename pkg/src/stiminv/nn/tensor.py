"""Reverse-mode automatic differentiation over 2-D float64 arrays.

Every value in the engine is a matrix: scalars are (1, 1), row vectors
(1, d), column vectors (B, 1).  An operation returns a new ``Tensor``
whose ``_backward`` closure pushes the output gradient into the operand
gradients; ``Tensor.backward()`` runs the closures in reverse topological
order.  Only the operations the four inverters need are provided.

Gradient conventions at kinks: ``relu`` and ``clip_min`` propagate zero
on the clamped side (subgradient at the boundary is taken as zero).
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..errors import NonFiniteError

# When enabled, every op validates that its output is finite.  Off by
# default: training loops check loss finiteness instead.
DEBUG_CHECK_FINITE = False

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"engine tensors are 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D float64 array plus the bookkeeping for reverse-mode AD."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar loss through the recorded graph.

        The graph is consumed: interior nodes drop their closures so the
        whole step can be freed by reference counting.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar (1,1) loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node._parents:
                node._parents = ()
                node._backward = None

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def make_op(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], None] | None,
) -> Tensor:
    """Assemble an op result; public so custom ops (e.g. projections)
    can participate in the graph."""
    parents = tuple(p for p in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(parents))
    if parents:
        out._parents = parents
        out._backward = backward
    if DEBUG_CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise NonFiniteError("non-finite value produced by an engine op")
    return out


# elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return make_op(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return make_op(data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, -g)

    return make_op(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return make_op(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return make_op(data, (a, b), backward)


def pow_const(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data**exponent

    def backward(g):
        if a.requires_grad:
            _accum(a, g * exponent * a.data ** (exponent - 1.0))

    return make_op(data, (a,), backward)


def square(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * (2.0 * a.data))

    return make_op(a.data * a.data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return make_op(data, (a, b), backward)


def affine(x, weight, bias) -> Tensor:
    """Fused x @ weight + bias (bias is a (1, d) row)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.shape[1] != weight.data.shape[0]:
        raise ValueError(
            f"affine dimension mismatch: {x.data.shape} @ {weight.data.shape}"
        )
    data = x.data @ weight.data + bias.data

    def backward(g):
        if x.requires_grad:
            _accum(x, g @ weight.data.T)
        if weight.requires_grad:
            _accum(weight, x.data.T @ g)
        if bias.requires_grad:
            _accum(bias, g.sum(axis=0, keepdims=True))

    return make_op(data, (x, weight, bias), backward)


# transcendental --------------------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * data)

    return make_op(data, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, g / a.data)

    return make_op(np.log(a.data), (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * (0.5 / data))

    return make_op(data, (a,), backward)


def cos(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, -g * np.sin(a.data))

    return make_op(np.cos(a.data), (a,), backward)


def sin(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * np.cos(a.data))

    return make_op(np.sin(a.data), (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - data * data))

    return make_op(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            _accum(a, g * data * (1.0 - data))

    return make_op(data, (a,), backward)


# activations -----------------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return make_op(a.data * mask, (a,), backward)


def eluplus1(a) -> Tensor:
    """ELU(x) + 1: equals x + 1 for x >= 0 and exp(x) for x < 0.

    Strictly positive for every finite input.
    """
    a = as_tensor(a)
    pos = a.data >= 0
    data = np.where(pos, a.data + 1.0, np.exp(np.minimum(a.data, 0.0)))
    deriv = np.where(pos, 1.0, data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * deriv)

    return make_op(data, (a,), backward)


def clip_min(a, floor: float) -> Tensor:
    """max(a, floor); gradient is blocked on clamped entries."""
    a = as_tensor(a)
    mask = a.data > floor

    def backward(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return make_op(np.maximum(a.data, floor), (a,), backward)


def softmax(a) -> Tensor:
    """Row-wise softmax (shift-stabilized)."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=1, keepdims=True)
            _accum(a, data * (g - dot))

    return make_op(data, (a,), backward)


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def backward(g):
        if a.requires_grad:
            _accum(a, g - soft * g.sum(axis=1, keepdims=True))

    return make_op(data, (a,), backward)


def logsumexp(a) -> Tensor:
    """Row-wise log-sum-exp, output shape (B, 1)."""
    a = as_tensor(a)
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    data = m + np.log(s)
    soft = e / s

    def backward(g):
        if a.requires_grad:
            _accum(a, g * soft)

    return make_op(data, (a,), backward)


# reductions and reshaping ---------------------------------------------


def tsum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        data = a.data.sum().reshape(1, 1)
    else:
        data = a.data.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g, a.data.shape))

    return make_op(data, (a,), backward)


def tmean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
        data = a.data.mean().reshape(1, 1)
    else:
        count = a.data.shape[axis]
        data = a.data.mean(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g / count, a.data.shape))

    return make_op(data, (a,), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, edges[:-1], edges[1:]):
            if p.requires_grad:
                _accum(p, g[:, lo:hi])

    return make_op(data, parts, backward)


def take_cols(a, index) -> Tensor:
    """Column gather: out[:, k] = a[:, index[k]].  Used for slicing and
    permutation flows; indices may repeat."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(ga, (slice(None), index), g)
            _accum(a, ga)

    return make_op(a.data[:, index], (a,), backward)


def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, epsilon: float):
    """Fused training-mode batch normalization over rows.

    Returns (out, batch_mean, batch_var) with the statistics as plain
    arrays for the running-buffer update.  Gradients flow through the
    batch statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=0, keepdims=True)
    var = x.data.var(axis=0, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu) * inv_std
    data = gamma.data * xhat + beta.data
    n_rows = x.data.shape[0]

    def backward(g):
        if beta.requires_grad:
            _accum(beta, g.sum(axis=0, keepdims=True))
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
        if x.requires_grad:
            gz = g * gamma.data
            _accum(
                x,
                inv_std
                * (
                    gz
                    - gz.mean(axis=0, keepdims=True)
                    - xhat * (gz * xhat).mean(axis=0, keepdims=True)
                ),
            )

    out = make_op(data, (x, gamma, beta), backward)
    return out, mu, var


def standard_normal_logdensity(x: Tensor) -> Tensor:
    """Row-wise log N(x; 0, I), output (B, 1)."""
    d = x.data.shape[1]
    return tsum(square(x), axis=1) * (-0.5) + (-0.5 * d * _LOG_2PI)


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values detected in {what}")
