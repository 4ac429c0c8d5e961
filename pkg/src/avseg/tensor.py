"""Reverse-mode automatic differentiation over dense numpy arrays.

Every op records its parents and a per-parent gradient closure on the
output tensor; ``Tensor.backward()`` walks the recorded graph in reverse
topological order and accumulates gradients into each reachable tensor
with ``requires_grad=True``. Arrays keep whatever float dtype they were
created with: float32 is the training default, float64 is what the
gradient checker uses.

A graph is confined to the context that built it; distinct graphs may be
evaluated concurrently. There is no shared mutable state apart from the
process-wide checked-mode flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "as_tensor",
    "parameter",
    "checked_mode",
    "is_checked",
    "matmul",
    "exp",
    "log",
    "sigmoid",
    "softplus",
    "relu",
    "softmax",
    "log_softmax",
    "logsumexp",
    "ssum",
    "mean",
    "amax",
    "reshape",
    "transpose",
    "broadcast_to",
    "concat",
    "gather",
    "stop_gradient",
    "layer_norm",
    "GradCheckReport",
    "grad_check",
]

_checked = False


class checked_mode:
    """Context manager turning on finiteness guards at op boundaries."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._saved = False

    def __enter__(self):
        global _checked
        self._saved = _checked
        _checked = self.enabled
        return self

    def __exit__(self, *exc):
        global _checked
        _checked = self._saved
        return False


def is_checked() -> bool:
    return _checked


def _guard(arr: np.ndarray, what: str) -> None:
    if _checked and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
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
    """A dense array plus the bookkeeping needed for reverse-mode grads."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        _guard(self.data, "tensor input")
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._grad_fns = ()

    # -- inspection ------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- graph construction ----------------------------------------------
    @staticmethod
    def _make(data, parents, grad_fns) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        _guard(data, "op output")
        out.grad = None
        track = tuple(p.requires_grad for p in parents)
        if any(track):
            out.requires_grad = True
            out._parents = parents
            out._grad_fns = grad_fns
        else:
            out.requires_grad = False
            out._parents = ()
            out._grad_fns = ()
        return out

    def backward(self) -> None:
        """Accumulate gradients of this scalar into the graph's tensors."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            g = node.grad
            if g is None:
                continue
            for parent, fn in zip(node._parents, node._grad_fns):
                if not parent.requires_grad:
                    continue
                pg = fn(g)
                _guard(pg, "gradient")
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return ssum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


# -- elementwise arithmetic ------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor._make(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor._make(
        a.data - b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor._make(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    return Tensor._make(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * out / b.data, b.data.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), (lambda g: -g,))


def power(a: Tensor, p: float) -> Tensor:
    out = a.data**p
    return Tensor._make(out, (a,), (lambda g: g * p * a.data ** (p - 1),))


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires tensors with ndim >= 2")
    out = a.data @ b.data

    def ga(g):
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)

    def gb(g):
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return Tensor._make(out, (a, b), (ga, gb))


# -- nonlinearities ----------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), (lambda g: g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), (lambda g: g / a.data,))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)
    return Tensor._make(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data)
    return Tensor._make(out, (a,), (lambda g: g * expit(a.data),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor._make(np.where(mask, a.data, 0.0), (a,), (lambda g: g * mask,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad(g):
        return out * (g - (g * out).sum(axis=axis, keepdims=True))

    return Tensor._make(out, (a,), (grad,))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def grad(g):
        return g - np.exp(out) * g.sum(axis=axis, keepdims=True)

    return Tensor._make(out, (a,), (grad,))


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * soft

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (a,), (grad,))


# -- reductions --------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)), shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    if not keepdims:
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def ssum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return Tensor._make(
        np.asarray(out), (a,), (lambda g: _expand_reduced(g, a.data.shape, axis, keepdims).copy(),)
    )


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / max(np.asarray(out).size, 1)
    return Tensor._make(
        np.asarray(out),
        (a,),
        (lambda g: _expand_reduced(g, a.data.shape, axis, keepdims) / n,),
    )


def amax(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    out = a.data.max(axis=axis, keepdims=True)
    mask = (a.data == out).astype(a.data.dtype)
    mask = mask / mask.sum(axis=axis, keepdims=True)

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * mask

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (a,), (grad,))


# -- shape manipulation -------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor._make(
        a.data.reshape(shape), (a,), (lambda g: g.reshape(a.data.shape),)
    )


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._make(
        a.data.transpose(axes), (a,), (lambda g: g.transpose(inverse),)
    )


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return Tensor._make(
        np.broadcast_to(a.data, shape).copy(),
        (a,),
        (lambda g: _unbroadcast(g, a.data.shape),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return Tensor._make(out, tuple(tensors), tuple(make_grad(i) for i in range(len(tensors))))


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def grad(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return full

    return Tensor._make(np.array(out, copy=True), (a,), (grad,))


def gather(a: Tensor, indices) -> Tensor:
    """Select rows along axis 0; gradient scatter-adds back (duplicates ok)."""
    indices = np.asarray(indices, dtype=np.intp)
    out = a.data[indices]

    def grad(g):
        full = np.zeros_like(a.data)
        np.add.at(full, indices, g)
        return full

    return Tensor._make(out, (a,), (grad,))


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data)


# -- composites ----------------------------------------------------------------


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, Tensor(np.asarray(eps, dtype=x.dtype))), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


# -- gradient checking ----------------------------------------------------------


@dataclass
class GradCheckReport:
    """Analytic-vs-central-difference comparison for one scalar map."""

    op_name: str
    per_input: list = field(default_factory=list)
    max_rel_error: float = 0.0

    def __str__(self):
        return f"{self.op_name}: max rel err {self.max_rel_error:.3e}"


def grad_check(f, inputs, step: float = 1e-6, name: str = "f") -> GradCheckReport:
    """Compare analytic gradients of scalar-valued ``f`` to central differences.

    ``inputs`` is a list of numpy arrays (use float64); ``f`` takes the
    corresponding Tensors and returns a scalar Tensor. Relative error per
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    arrays = [np.asarray(x, dtype=np.float64) for x in inputs]
    tensors = [Tensor(x.copy(), requires_grad=True) for x in arrays]
    out = f(*tensors)
    if not np.isfinite(out.data).all():
        raise FloatingPointError("f(x) is not finite")
    out.backward()
    analytic = [
        t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors
    ]

    def eval_at(points):
        val = f(*[Tensor(p) for p in points])
        return float(val.data)

    report = GradCheckReport(op_name=name)
    for k, x in enumerate(arrays):
        numeric = np.zeros_like(x)
        flat = x.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = eval_at(arrays)
            flat[i] = orig - step
            lo = eval_at(arrays)
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * step)
        a = analytic[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
        report.per_input.append(rel)
    report.max_rel_error = max(report.per_input, default=0.0)
    return report
