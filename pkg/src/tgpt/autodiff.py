"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records the forward pass as an ordered list of nodes; backward walks
it once in reverse, accumulating gradients across fan-out. Tensors without a
tape are constants: running the same ops on them is a plain (and fast) numpy
computation, which is how inference avoids recording overhead.

Broadcasting is restricted to leading-axis expansion: trailing axes must
match exactly, the shorter operand is virtually repeated along the extra
leading axes of the longer one.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tape", "Tensor", "NonFiniteError", "constant",
    "add", "sub", "mul", "matmul", "transpose", "reshape", "concat",
    "slice_axis", "exp", "log", "sqrt", "absolute", "gelu", "softmax",
    "layer_norm", "reduce_sum", "reduce_mean", "gather",
    "backward", "grad_check",
]

# gelu tanh approximation constants (fixed so oracles can reproduce them)
GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class Tape:
    """Ordered record of operations; topological order is execution order."""

    def __init__(self):
        self._nodes: list[tuple[tuple[int, ...], Callable]] = []
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, data, requires_grad: bool = True) -> "Tensor":
        """Register an input tensor on this tape; non-grad leaves stay constants."""
        if not requires_grad:
            return Tensor(np.asarray(data, dtype=np.float64))
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, tape=self)
        t.node_id = self._push((), None)
        return t

    def _push(self, parents: tuple[int, ...], backward_fn) -> int:
        if self._consumed:
            raise RuntimeError("tape already consumed by backward")
        self._nodes.append((parents, backward_fn))
        return len(self._nodes) - 1


class Tensor:
    """n-dimensional float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "requires_grad", "tape", "node_id")

    def __init__(self, data, requires_grad: bool = False, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape = tape
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __abs__(self):
        return absolute(self)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


def _merge_tape(inputs: Sequence[Tensor]) -> Tape | None:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("inputs belong to different tapes")
            tape = t.tape
    return tape


def _result(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an op result, recording a node when any input is tracked."""
    _check_finite(out, op)
    tape = _merge_tape(inputs)
    grad = any(t.requires_grad for t in inputs)
    res = Tensor(out, requires_grad=grad, tape=tape if grad else None)
    if grad and tape is not None:
        parents = tuple(t.node_id if t.tape is not None else -1 for t in inputs)
        res.node_id = tape._push(parents, backward_fn)
    return res


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the leading axes added by broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    if grad.shape != shape:
        raise ValueError(f"gradient shape {grad.shape} does not reduce to {shape}")
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    head = min(len(sa), len(sb))
    if head and sa[-head:] != sb[-head:]:
        raise ValueError(f"{op}: shapes {sa} and {sb} do not align on trailing axes")


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _result("mul", ad * bd, (a, b),
                   lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul requires rank >= 2 operands")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    head = min(a.data.ndim, b.data.ndim) - 2
    if head and a.shape[-2 - head:-2] != b.shape[-2 - head:-2]:
        raise ValueError(f"matmul: batch axes differ ({a.shape} @ {b.shape})")
    ad, bd = a.data, b.data

    if ad.ndim > 2 and bd.ndim == 2:
        # collapse the stacked case into one gemm instead of a gufunc loop
        flat = ad.reshape(-1, ad.shape[-1])
        out = (flat @ bd).reshape(*ad.shape[:-1], bd.shape[-1])

        def bwd(g):
            gf = g.reshape(-1, g.shape[-1])
            return (gf @ bd.T).reshape(ad.shape), flat.T @ gf

        return _result("matmul", out, (a, b), bwd)

    def bwd(g):
        ga = _reduce_to(g @ bd.swapaxes(-1, -2), a.shape)
        gb = _reduce_to(ad.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _result("matmul", ad @ bd, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.data.ndim < 2:
        raise ValueError("transpose requires rank >= 2")
    return _result("transpose", a.data.swapaxes(-1, -2), (a,),
                   lambda g: (g.swapaxes(-1, -2),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _result("reshape", a.data.reshape(shape), (a,),
                   lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ValueError("concat of nothing")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ValueError(f"slice [{start}:{stop}] out of bounds for axis of size {n}")
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def bwd(g):
        buf = np.zeros(a.shape)
        buf[index] = g
        return (buf,)

    return _result("slice", np.ascontiguousarray(a.data[index]), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _result("log", out, (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return _result("sqrt", out, (a,), lambda g: (g * (0.5 / out),))


def absolute(a: Tensor) -> Tensor:
    """|x| with subgradient sign(x) (0 at x=0)."""
    ad = a.data
    return _result("abs", np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximation gelu: 0.5*x*(1+tanh(c*(x+0.044715*x^3)))."""
    x = a.data
    x2 = x * x
    t = np.tanh(GELU_C * (x + GELU_A * (x2 * x)))

    def bwd(g):
        d_inner = GELU_C * (1.0 + 3.0 * GELU_A * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result("gelu", 0.5 * x * (1.0 + t), (a,), bwd)


def softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _result("softmax", out, (a,), bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x = a.data
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        dg = _reduce_to((g * xhat).reshape(-1, d).sum(axis=0).reshape(gain.shape),
                        gain.shape)
        db = _reduce_to(g.reshape(-1, d).sum(axis=0).reshape(bias.shape), bias.shape)
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dg, db

    return _result("layer_norm", out, (a, gain, bias), bwd)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape

    def bwd(g):
        if axis is None:
            return (np.full(shape, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("reduce_sum", np.asarray(a.data.sum(axis=axis)), (a,), bwd)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    n = a.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            return (np.full(shape, g / n),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), shape).copy(),)

    return _result("reduce_mean", np.asarray(a.data.mean(axis=axis)), (a,), bwd)


def gather(a: Tensor, index) -> Tensor:
    """Select rows along axis 0 by integer index."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather index must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ValueError("gather index out of range")
    shape = a.shape

    def bwd(g):
        buf = np.zeros(shape)
        np.add.at(buf, idx, g)
        return (buf,)

    return _result("gather", a.data[idx], (a,), bwd)


# ---------------------------------------------------------------------------
# backward & gradient checking
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Run reverse-mode accumulation from a scalar loss.

    Returns node_id -> gradient for every tracked node reached from the loss.
    The tape is consumed: a second backward on it raises.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None or loss.node_id is None:
        raise ValueError("loss is not tracked on any tape")
    if tape._consumed:
        raise RuntimeError("tape already consumed by backward")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones(())}
    for nid in range(loss.node_id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        parents, backward_fn = tape._nodes[nid]
        if backward_fn is None:
            continue
        for pid, pg in zip(parents, backward_fn(g)):
            if pid < 0 or pg is None:
                continue
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    return grads


def grad_check(f, point, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `point` is one array or a sequence of arrays; `f` maps matching Tensors to
    a scalar Tensor. Relative error uses a max(1, |analytic|, |numeric|)
    denominator per coordinate.
    """
    arrays = [np.asarray(p, dtype=np.float64) for p in
              (point if isinstance(point, (list, tuple)) else [point])]

    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    out = f(*leaves)
    if out.data.ndim != 0:
        raise ValueError("grad_check requires a scalar-valued function")
    grads = backward(out)
    analytic = [grads.get(leaf.node_id, np.zeros(a.shape))
                for leaf, a in zip(leaves, arrays)]

    def eval_at(pts):
        return float(f(*[constant(p) for p in pts]).data)

    worst = 0.0
    for k, a in enumerate(arrays):
        num = np.zeros(a.shape)
        flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            plus = [p.copy() for p in arrays]
            plus[k].reshape(-1)[i] = orig + step
            minus = [p.copy() for p in arrays]
            minus[k].reshape(-1)[i] = orig - step
            num.reshape(-1)[i] = (eval_at(plus) - eval_at(minus)) / (2.0 * step)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic[k]), np.abs(num)))
        err = np.abs(analytic[k] - num) / denom
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst
