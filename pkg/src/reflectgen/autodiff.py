"""Dense tensors with reverse-mode automatic differentiation.

A module-level tape records every kernel applied to gradient-requiring
tensors; ``backward`` replays it once in reverse, accumulating gradients
into the leaves. Data is float32 by default (float64 is supported so the
finite-difference oracle can run the same graph at higher precision);
reductions always accumulate in float64.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

RMS_NORM_EPS = 1e-6
_MASK_MIN = -1e9  # additive attention mask value; finite so kernels stay NaN-free


class ShapeMismatch(ValueError):
    """Operand shapes do not conform to the kernel's contract."""


class NonFiniteError(ValueError):
    """A tensor value is NaN or Inf, which violates the kernel contract."""


class TapeError(RuntimeError):
    """Backward called on an empty tape or a non-scalar loss."""


class TapeNode:
    """One recorded kernel application: op tag, inputs, and backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs, output, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_tape: list[TapeNode] = []
_grad_enabled: bool = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / data prep)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def tape_size() -> int:
    return len(_tape)


def reset_tape() -> None:
    _tape.clear()


class Tensor:
    """A dense n-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.asarray(data, dtype=dtype)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed with NaN/Inf values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        return out

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, dtype=dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the kernel suite
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add(self, _as_tensor(-other, self.dtype))
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype=np.float32) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), dtype=dtype)


def constant(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def _check_finite_out(op: str, out: np.ndarray) -> np.ndarray:
    # a single-pass sum is NaN/Inf iff the array holds one (values here are
    # O(1), so float32 overflow of the sum itself cannot occur)
    if not np.isfinite(out.sum(dtype=np.float64)):
        raise NonFiniteError(f"kernel '{op}' produced non-finite values")
    return out


# structural kernels cannot create non-finite values from finite inputs,
# so the per-kernel scan is skipped for them (finiteness holds by induction)
_STRUCTURAL = frozenset(
    {"reshape", "transpose", "slice", "concat", "embed_lookup", "softmax",
     "mean_pool2d"})


def _make_out(op: str, data: np.ndarray, inputs: Sequence[Tensor],
              backward_fn: Callable) -> Tensor:
    if op not in _STRUCTURAL:
        _check_finite_out(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _grad_enabled and any(t.requires_grad for t in inputs)
    out.requires_grad = track
    if track:
        _tape.append(TapeNode(op, tuple(inputs), out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# kernel suite
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports 2-d weights on the right or equal batch dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward_fn(g):
        if b.ndim == 2:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _make_out("matmul", out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add operands do not broadcast: {a.shape} + {b.shape}") from None

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make_out("add", out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul operands do not broadcast: {a.shape} * {b.shape}") from None

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make_out("mul", out, (a, b), backward_fn)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    if not np.isfinite(s):
        raise NonFiniteError("scale factor is not finite")
    out = a.data * a.dtype.type(s)

    def backward_fn(g):
        return (g * s,)

    return _make_out("scale", out, (a,), backward_fn)


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation: 0.5 x (1 + tanh(c (x + a x^3)))."""
    d = x.data
    dt = x.dtype.type
    u = np.tanh(dt(_GELU_C) * (d + dt(_GELU_A) * d * d * d))
    out = dt(0.5) * d * (1.0 + u)

    def backward_fn(g):
        # derivative of the same approximation, reusing the saved tanh
        sech2 = 1.0 - u * u
        du = dt(_GELU_C) * (1.0 + dt(3 * _GELU_A) * d * d)
        return (g * (dt(0.5) * (1.0 + u) + dt(0.5) * d * sech2 * du),)

    return _make_out("gelu", out, (x,), backward_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    z = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(z, out=z)
    denom = z.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
    out = np.divide(z, denom, out=z)

    def backward_fn(g):
        gy = g * out
        return (gy - out * gy.sum(axis=axis, keepdims=True),)

    return _make_out("softmax", out, (x,), backward_fn)


def rms_norm(x: Tensor, gain: Tensor, axis: int = -1, eps: float = RMS_NORM_EPS) -> Tensor:
    """Root-mean-square normalization with a learned gain along ``axis``."""
    n = x.shape[axis]
    if gain.shape != (n,):
        raise ShapeMismatch(f"rms_norm gain shape {gain.shape} != ({n},)")
    if axis not in (-1, x.ndim - 1):
        raise ShapeMismatch("rms_norm normalizes the last axis")
    ms = np.mean(np.square(x.data), axis=axis, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(ms + eps)).astype(x.dtype)
    xhat = x.data * inv
    out = xhat * gain.data

    def backward_fn(g):
        gy = g * gain.data
        dot = np.sum(gy.astype(np.float64) * x.data, axis=axis, keepdims=True)
        gx = gy * inv - x.data * (inv.astype(np.float64) ** 3 * dot / n).astype(x.dtype)
        ggain = np.sum((g * xhat).reshape(-1, n), axis=0, dtype=np.float64).astype(x.dtype)
        return gx.astype(x.dtype), ggain

    return _make_out("rms_norm", out, (x, gain), backward_fn)


def mean_pool2d(x: Tensor, window: int) -> Tensor:
    """Average-pool the last two axes by a square window that divides them."""
    h, w = x.shape[-2], x.shape[-1]
    if h % window or w % window:
        raise ShapeMismatch(f"mean_pool2d window {window} does not divide map {h}x{w}")
    lead = x.shape[:-2]
    r = x.data.reshape(*lead, h // window, window, w // window, window)
    out = r.mean(axis=(-3, -1), dtype=np.float64).astype(x.dtype)

    def backward_fn(g):
        gx = np.repeat(np.repeat(g, window, axis=-2), window, axis=-1) / (window * window)
        return (gx.astype(x.dtype),)

    return _make_out("mean_pool2d", out, (x,), backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != (axis % len(base)) and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeMismatch(f"concat shapes differ off-axis: {tensors[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def backward_fn(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _make_out("concat", out, tuple(tensors), backward_fn)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    n = x.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeMismatch(f"slice [{start}:{stop}) out of range for extent {n}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = x.data[idx].copy()

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _make_out("slice", out, (x,), backward_fn)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))

    def backward_fn(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _make_out("transpose", out, (x,), backward_fn)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return _make_out("reshape", out, (x,), backward_fn)


def embed_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into an embedding table; ids is an integer array."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatch("embed_lookup ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embed_lookup id out of range for table of {table.shape[0]} rows")
    out = table.data[ids].copy()

    def backward_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make_out("embed_lookup", out, (table,), backward_fn)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: Tensor | None = None) -> Tensor:
    """softmax(q kᵀ / sqrt(d) + mask) v over the last two axes.

    Composed from primitive kernels so the backward rule is inherited.
    ``mask`` is additive (0 for allowed, large negative for blocked).
    """
    if q.shape[-1] != k.shape[-1] or k.shape != v.shape:
        raise ShapeMismatch(f"attention shapes q={q.shape} k={k.shape} v={v.shape}")
    d = q.shape[-1]
    scores = scale(matmul(q, transpose(k, (*range(k.ndim - 2), k.ndim - 1, k.ndim - 2))),
                   1.0 / np.sqrt(d))
    if mask is not None:
        scores = add(scores, mask)
    return matmul(softmax(scores, axis=-1), v)


def sum_(x: Tensor, axis=None) -> Tensor:
    out = np.sum(x.data, axis=axis, dtype=np.float64).astype(x.dtype)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(np.asarray(g, dtype=x.dtype), x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _make_out("sum", out, (x,), backward_fn)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis=axis), 1.0 / n)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def grad_array(t: Tensor) -> np.ndarray:
    """Gradient of a leaf after backward; zeros if the loss never touched it."""
    if t.grad is None:
        return np.zeros(t.shape, dtype=t.dtype)
    return t.grad


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    The tape is consumed: a new forward pass is needed before the next call.
    Leaf gradients accumulate (+=) to support microbatch accumulation.
    """
    if loss.ndim != 0:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not _tape:
        raise TapeError("backward on an empty tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    produced = {id(node.output) for node in _tape}
    try:
        for node in reversed(_tape):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if id(t) in produced:
                    key = id(t)
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
                elif t.grad is None:
                    t.grad = gi.astype(t.dtype, copy=True)
                else:
                    t.grad = t.grad + gi.astype(t.dtype)
    finally:
        _tape.clear()
