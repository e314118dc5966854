"""Dense float64 tensors with a reverse-mode gradient tape.

Every operation returns a new immutable :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` walks the recorded graph in reverse topological order.

Only what the latent-ODE network needs is supported: 2-D matmul, same-shape
elementwise ops (plus a trailing-axis row broadcast for biases), a handful of
activations, concatenation/slicing along the last axis and reductions.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

_reduce_sum = np.add.reduce

__all__ = [
    "Tensor",
    "NonFiniteError",
    "ShapeError",
    "tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "lincomb",
    "unary_map",
    "tanh",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "square",
    "dense",
    "concat_rows",
    "take",
    "stack",
    "sum_all",
    "mean_all",
    "topological_order",
    "backward",
    "grad_check",
    "no_grad",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """A forward operation produced NaN or Inf."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording backward closures."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, op="leaf"):
        arr = data if type(data) is np.ndarray and data.dtype == np.float64 else np.asarray(data, np.float64)
        # a sum propagates NaN/Inf and is cheaper than isfinite().all()
        if not math.isfinite(_reduce_sum(arr, None)):
            raise NonFiniteError(f"non-finite value produced by {op!r}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if needs:
        return Tensor(data, True, _parents=parents, _backward=backward_fn, op=op)
    return Tensor(data, False, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    # only trailing-axis row broadcast (bias vectors) and scalars are allowed
    small, big = (a, b) if a.data.size <= b.data.size else (b, a)
    if small.data.size == 1 or (small.ndim == 1 and big.ndim >= 1 and big.shape[-1] == small.shape[0]):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------- binary ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m×k) or vector (k) with b (k×n) or vector (k)."""
    a, b = _lift(a), _lift(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        if A.ndim == 1 and B.ndim == 1:
            return g * B, g * A
        if A.ndim == 1:
            return B @ g, np.outer(A, g)
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g @ B.T, A.T @ g

    return _make(A @ B, (a, b), bw, "matmul")


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def lincomb(coeffs: Sequence[float], xs: Sequence[Tensor]) -> Tensor:
    """Σ c_i · x_i over same-shape tensors as a single graph node."""
    if len(coeffs) != len(xs) or not xs:
        raise ShapeError("lincomb: need equally many coefficients and tensors")
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ShapeError("lincomb: shapes differ")
    cs = [float(c) for c in coeffs]
    out = cs[0] * xs[0].data
    for c, x in zip(cs[1:], xs[1:]):
        out = out + c * x.data
    return _make(out, tuple(xs), lambda g: tuple(c * g for c in cs), "lincomb")


# ----------------------------------------------------------------- unary ops

def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # stable for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


_UNARY = {
    # kind: (forward, derivative from (x, y))
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "sigmoid": (_sigmoid, lambda x, y: y * (1.0 - y)),
    "softplus": (_softplus, lambda x, y: _sigmoid(x)),
    "exp": (np.exp, lambda x, y: y),
    "log": (np.log, lambda x, y: 1.0 / x),
}


def unary_map(kind: str, x: Tensor) -> Tensor:
    try:
        fwd, deriv = _UNARY[kind]
    except KeyError:
        raise ValueError(f"unsupported unary op {kind!r}") from None
    x = _lift(x)
    X = x.data
    Y = fwd(X)
    return _make(Y, (x,), lambda g: (g * deriv(X, Y),), kind)


def tanh(x: Tensor) -> Tensor:
    return unary_map("tanh", x)


def sigmoid(x: Tensor) -> Tensor:
    return unary_map("sigmoid", x)


def softplus(x: Tensor) -> Tensor:
    return unary_map("softplus", x)


def exp(x: Tensor) -> Tensor:
    return unary_map("exp", x)


def log(x: Tensor) -> Tensor:
    return unary_map("log", x)


def square(x: Tensor) -> Tensor:
    X = x.data
    return _make(X * X, (x,), lambda g: (2.0 * g * X,), "square")


def dense(x: Tensor, W: Tensor, b: Tensor, activation: str | None = None) -> Tensor:
    """Fused ``act(x @ W + b)``; x is (batch, in) or (in,), W is (in, out)."""
    X, Wd, bd = x.data, W.data, b.data
    if X.ndim not in (1, 2) or Wd.ndim != 2 or X.shape[-1] != Wd.shape[0]:
        raise ShapeError(f"dense: input {X.shape} does not match weight {Wd.shape}")
    if bd.shape != (Wd.shape[1],):
        raise ShapeError(f"dense: bias {bd.shape} does not match weight {Wd.shape}")
    pre = X @ Wd
    pre += bd
    deriv = None
    if activation is None:
        Y = pre
    elif activation == "tanh":
        # backward needs only Y, so reuse the buffer
        Y = np.tanh(pre, out=pre)
    else:
        try:
            fwd, deriv = _UNARY[activation]
        except KeyError:
            raise ValueError(f"unsupported activation {activation!r}") from None
        Y = fwd(pre)

    def bw(g):
        if activation == "tanh":
            d = Y * Y
            np.subtract(1.0, d, out=d)
            d *= g
            g = d
        elif deriv is not None:
            g = g * deriv(pre, Y)
        if X.ndim == 1:
            return g @ Wd.T, np.outer(X, g), g
        return g @ Wd.T, X.T @ g, g.sum(axis=0)

    return _make(Y, (x, W, b), bw, "dense")


# ----------------------------------------------------------- structural ops

def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``[a; b]`` along the last axis (vectors, or batches of vectors)."""
    a, b = _lift(a), _lift(b)
    if a.ndim != b.ndim or a.ndim not in (1, 2) or a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_rows: cannot join {a.shape} and {b.shape}")
    p = a.shape[-1]
    out = np.concatenate([a.data, b.data], axis=-1)
    return _make(out, (a, b), lambda g: (g[..., :p], g[..., p:]), "concat")


def take(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``x[..., start:stop]``."""
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _make(x.data[..., start:stop], (x,), bw, "take")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ShapeError("stack: shapes differ")
    out = np.stack([x.data for x in xs], axis=axis)
    n = len(xs)
    return _make(out, tuple(xs), lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)), "stack")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _make(x.data.sum(), (x,), lambda g: (np.full(shape, float(g)),), "sum")


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return _make(x.data.mean(), (x,), lambda g: (np.full(shape, float(g) / n),), "mean")


# ------------------------------------------------------------------ backward

def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that require grad, parents before children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Returns a map from each requires-grad leaf to its gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    order = topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            leaves[node] = node.grad
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
               coords: Iterable[int] | None = None) -> float:
    """Max relative error between backward() and central differences.

    ``f`` maps ``x`` to a scalar tensor. ``x.data`` is perturbed in place and
    restored. ``coords`` restricts the check to a subset of flat indices.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    if not x.requires_grad:
        raise ValueError("grad_check needs a requires_grad tensor")
    x.grad = None
    backward(f(x))
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    flat = x.data.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    with no_grad():
        for i in idx:
            orig = flat[i]
            try:
                flat[i] = orig + eps
                fp = float(f(x).data)
                flat[i] = orig - eps
                fm = float(f(x).data)
            except NonFiniteError as e:
                raise FloatingPointError(f"non-finite objective at coordinate {i}") from e
            finally:
                flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - num) / max(1e-12, abs(a) + abs(num))
            worst = max(worst, err)
    return worst
