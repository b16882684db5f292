"""Dense N-dimensional arrays with reverse-mode differentiation.

Every primitive the video models need lives here: elementwise math,
broadcasting binary ops, batched matmul, stabilized (maskable) softmax,
3D convolution and max-pooling, and layout ops (reshape / transpose /
roll / pad / slicing / concat). Forward values are numpy arrays; each
op records its inputs and a gradient closure, so calling ``backward()``
on a scalar replays the recorded graph in reverse topological order.

Convention: float32 for training, float64 for verification (finite
differences are meaningless in single precision).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "no_grad",
    "tensor",
    "zeros",
    "ones",
    "concat",
    "matmul",
    "softmax",
    "log_softmax",
    "conv3d",
    "maxpool3d",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericError(FloatingPointError):
    """Raised on numeric-domain violations or non-finite error states."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype.kind in "iub":
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense array plus an optional gradient buffer of the same shape.

    ``requires_grad`` marks leaves that should receive gradients;
    interior nodes carry a gradient closure created by the op that
    produced them. Gradients accumulate across ``backward()`` calls
    until cleared.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None

    # -- structure ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ----------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar through the recorded graph.

        Visits nodes in reverse topological order; every reachable
        tensor with ``requires_grad`` ends with a populated ``grad``.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._grad_fn is not None and node.grad is not None:
                node._grad_fn(node.grad)
                if not node.requires_grad:
                    node.grad = None  # free interior buffers

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data, dtype=None, requires_grad=False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def zeros(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._grad_fn is not None for p in parents):
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise binary ------------------------------------------------------


def _binary(a, b, fwd, da, db) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _coerce(b, a)
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"shapes {a.shape} and {b.shape} do not broadcast") from exc

    def grad_fn(g):
        a._accumulate(_unbroadcast(da(g, a.data, b.data, data), a.shape))
        b._accumulate(_unbroadcast(db(g, a.data, b.data, data), b.shape))

    return _make(data, (a, b), grad_fn)


def add(a, b) -> Tensor:
    return _binary(a, b, np.add, lambda g, x, y, o: g, lambda g, x, y, o: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, np.multiply, lambda g, x, y, o: g * y, lambda g, x, y, o: g * x)


def div(a, b) -> Tensor:
    return _binary(
        a, b, np.divide,
        lambda g, x, y, o: g / y,
        lambda g, x, y, o: -g * o / y,
    )


# -- elementwise unary -------------------------------------------------------


def _unary(x: Tensor, data: np.ndarray, dlocal: np.ndarray) -> Tensor:
    def grad_fn(g):
        x._accumulate(g * dlocal)

    return _make(data, (x,), grad_fn)


def neg(x: Tensor) -> Tensor:
    return _unary(x, -x.data, np.full_like(x.data, -1))


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    return _unary(x, data, data)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log requires strictly positive input")
    return _unary(x, np.log(x.data), 1.0 / x.data)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NumericError("sqrt requires non-negative input")
    data = np.sqrt(x.data)
    return _unary(x, data, 0.5 / np.maximum(data, np.finfo(data.dtype).tiny))


def relu(x: Tensor) -> Tensor:
    return _unary(x, np.maximum(x.data, 0), (x.data > 0).astype(x.data.dtype))


def sigmoid(x: Tensor) -> Tensor:
    # stable for large |x|: exp of a non-positive argument only
    d = x.data
    data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _unary(x, data, data * (1.0 - data))


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    return _unary(x, data, 1.0 - data * data)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    d = x.data
    cdf = 0.5 * (1.0 + erf(d * _INV_SQRT2))
    pdf = np.exp(-0.5 * d * d) * _INV_SQRT_2PI
    return _unary(x, d * cdf, cdf + d * pdf)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed as max(x, 0) + log1p(e^-|x|)."""
    d = x.data
    data = np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d)))
    sig = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _unary(x, data, sig)


UNARY_KINDS = {
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "neg": neg,
}

BINARY_KINDS = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise_unary(x: Tensor, kind: str) -> Tensor:
    return UNARY_KINDS[kind](x)


def elementwise_binary(a: Tensor, b, kind: str) -> Tensor:
    return BINARY_KINDS[kind](a, b)


# -- reductions --------------------------------------------------------------


def sum_(x: Tensor, axis=None, keepdims=False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy() if np.ndim(g) else np.full_like(x.data, g))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        x._accumulate(np.broadcast_to(gg, x.shape))

    return _make(np.asarray(data), (x,), grad_fn)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / float(n))


# -- matmul ------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcastable batch extents."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul batch extents do not broadcast: {a.shape} x {b.shape}") from exc

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        a._accumulate(_unbroadcast(ga, a.shape))
        b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), grad_fn)


# -- softmax -----------------------------------------------------------------


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stabilized softmax along ``axis``.

    ``mask`` is an optional boolean array (broadcastable to ``x``) marking
    permitted entries; excluded entries are treated as -inf pre-softmax and
    come out exactly zero. A fully excluded row yields all zeros.
    """
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    d = x.data
    if mask is not None:
        d = np.where(mask, d, -np.inf)
    m = np.max(d, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(d - m)
    s = e.sum(axis=axis, keepdims=True)
    y = e / np.where(s == 0, 1.0, s)

    def grad_fn(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        x._accumulate(_unbroadcast(y * (g - inner), x.shape))

    return _make(y, (x,), grad_fn)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """log(softmax(x)) in log-space; gradient is softmax - onehot composed."""
    m = np.max(x.data, axis=axis, keepdims=True)
    shifted = sub(x, Tensor(m))  # max shift is constant wrt grad
    lse = log(sum_(exp(shifted), axis=axis, keepdims=True))
    return sub(shifted, lse)


# -- layout ------------------------------------------------------------------


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if np.prod(shape, dtype=np.int64) != x.size and -1 not in shape:
        raise ShapeError(f"cannot reshape {x.shape} (size {x.size}) to {shape}")
    data = x.data.reshape(shape)

    def grad_fn(g):
        x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), grad_fn)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid axis permutation {axes} for ndim {x.ndim}")
    inv = np.argsort(axes)

    def grad_fn(g):
        x._accumulate(np.transpose(g, inv))

    return _make(np.transpose(x.data, axes), (x,), grad_fn)


def roll(x: Tensor, shifts: tuple[int, ...], axes: tuple[int, ...]) -> Tensor:
    def grad_fn(g):
        x._accumulate(np.roll(g, tuple(-s for s in shifts), axes))

    return _make(np.roll(x.data, shifts, axes), (x,), grad_fn)


def pad(x: Tensor, pad_width: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; pad_width is one (before, after) pair per axis."""
    pw = tuple((int(b), int(a)) for b, a in pad_width)
    data = np.pad(x.data, pw)
    sl = tuple(slice(b, b + s) for (b, _), s in zip(pw, x.shape))

    def grad_fn(g):
        x._accumulate(g[sl])

    return _make(data, (x,), grad_fn)


def take(x: Tensor, key) -> Tensor:
    """Slicing / integer-array indexing with scatter-add gradient."""
    data = x.data[key]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        x._accumulate(gx)

    return _make(data, (x,), grad_fn)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])

    return _make(data, tuple(ts), grad_fn)


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = np.broadcast_to(x.data, shape)

    def grad_fn(g):
        x._accumulate(_unbroadcast(g, x.shape))

    return _make(data.copy(), (x,), grad_fn)


# -- 3D convolution ----------------------------------------------------------


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, (tuple, list)):
        t = tuple(int(u) for u in v)
        if len(t) != 3:
            raise ShapeError(f"expected 3 extents, got {v}")
        return t
    return (int(v),) * 3


def _im2col(x: np.ndarray, kshape, stride):
    """x: [B, C, T, H, W] already padded -> col [B, P, C*kt*kh*kw], out dims."""
    kt, kh, kw = kshape
    st, sh, sw = stride
    windows = np.lib.stride_tricks.sliding_window_view(x, (kt, kh, kw), axis=(2, 3, 4))
    windows = windows[:, :, ::st, ::sh, ::sw]
    b, c, ot, oh, ow = windows.shape[:5]
    # [B, T', H', W', C, kt, kh, kw] -> [B, P, K]
    col = windows.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(b, ot * oh * ow, c * kt * kh * kw)
    return np.ascontiguousarray(col), (ot, oh, ow)


def _corr3d(x: np.ndarray, w: np.ndarray, stride, padding):
    """Raw cross-correlation on [B, C, T, H, W] with kernel [O, C, kt, kh, kw]."""
    pt, ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    kt, kh, kw = w.shape[2:]
    if any(xp.shape[2 + i] < w.shape[2 + i] for i in range(3)):
        raise ShapeError(
            f"kernel {w.shape[2:]} larger than padded input {xp.shape[2:]}"
        )
    col, out_dims = _im2col(xp, (kt, kh, kw), stride)
    wmat = w.reshape(w.shape[0], -1)
    out = col @ wmat.T  # [B, P, O]
    b = x.shape[0]
    out = out.transpose(0, 2, 1).reshape(b, w.shape[0], *out_dims)
    return out, col


def conv3d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Direct-sum 3D convolution (cross-correlation form).

    ``x``: [C_in, T, H, W] or [B, C_in, T, H, W];
    ``kernel``: [C_out, C_in, kt, kh, kw]; output extent per axis is
    floor((in + 2*pad - k) / stride) + 1.
    """
    stride = _triple(stride)
    padding = _triple(padding)
    batched = x.ndim == 5
    if x.ndim not in (4, 5):
        raise ShapeError(f"conv3d input must be 4-D or 5-D, got {x.shape}")
    if x.shape[-4] != kernel.shape[1]:
        raise ShapeError(f"conv3d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    xb = x.data if batched else x.data[None]

    out, col = _corr3d(xb, kernel.data, stride, padding)
    if bias is not None:
        out = out + bias.data[None, :, None, None, None]
    if not batched:
        out = out[0]

    kshape = kernel.shape

    def grad_fn(g):
        gb5 = g if batched else g[None]
        bsz, cout = gb5.shape[:2]
        g2 = gb5.reshape(bsz, cout, -1).transpose(0, 2, 1)  # [B, P, O]
        gw = np.tensordot(g2, col, axes=([0, 1], [0, 1])).reshape(kshape)  # [O, K]
        kernel._accumulate(gw)
        if bias is not None:
            bias._accumulate(gb5.sum(axis=(0, 2, 3, 4)))
        if x.requires_grad or x._grad_fn is not None:
            gx = _conv3d_input_grad(gb5, kernel.data, xb.shape, stride, padding)
            x._accumulate(gx if batched else gx[0])

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(out, parents, grad_fn)


def _conv3d_input_grad(g: np.ndarray, w: np.ndarray, xshape, stride, padding) -> np.ndarray:
    """Gradient wrt conv3d input: stride-dilate g, full-pad, correlate with
    the spatially flipped, channel-swapped kernel, then crop to x."""
    b, cin = xshape[0], xshape[1]
    in_dims = xshape[2:]
    k = w.shape[2:]
    cout = w.shape[0]
    out_dims = g.shape[2:]

    dil_dims = tuple(stride[i] * (out_dims[i] - 1) + 1 for i in range(3))
    gd = np.zeros((b, cout, *dil_dims), dtype=g.dtype)
    gd[:, :, ::stride[0], ::stride[1], ::stride[2]] = g

    wflip = w[:, :, ::-1, ::-1, ::-1].swapaxes(0, 1)  # [C_in, C_out, kt, kh, kw]
    full_pad = tuple(k[i] - 1 for i in range(3))
    gx_head, _ = _corr3d(gd, np.ascontiguousarray(wflip), (1, 1, 1), full_pad)

    # head covers the first (in + 2*pad - remainder) padded positions; the
    # remainder tail is never touched by a forward window
    gxp = np.zeros((b, cin) + tuple(d + 2 * p for d, p in zip(in_dims, padding)), dtype=g.dtype)
    hd = gx_head.shape[2:]
    gxp[:, :, :hd[0], :hd[1], :hd[2]] = gx_head
    sl = tuple(slice(p, p + d) for p, d in zip(padding, in_dims))
    return gxp[:, :, sl[0], sl[1], sl[2]]


# -- 3D max-pooling ------------------------------------------------------------


def maxpool3d(x: Tensor, window) -> Tensor:
    """Window max with stride = window; trailing remainder is truncated.

    Gradient routes to the first maximal element of each window in
    row-major order.
    """
    pt, ph, pw = _triple(window)
    batched = x.ndim == 5
    if x.ndim not in (4, 5):
        raise ShapeError(f"maxpool3d input must be 4-D or 5-D, got {x.shape}")
    xb = x.data if batched else x.data[None]
    b, c, t, h, w = xb.shape
    if pt > t or ph > h or pw > w:
        raise ShapeError(f"pool window {(pt, ph, pw)} exceeds input {(t, h, w)}")
    t2, h2, w2 = t // pt, h // ph, w // pw
    xc = xb[:, :, : t2 * pt, : h2 * ph, : w2 * pw]
    win = xc.reshape(b, c, t2, pt, h2, ph, w2, pw).transpose(0, 1, 2, 4, 6, 3, 5, 7)
    flat = win.reshape(b, c, t2, h2, w2, pt * ph * pw)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    if not batched:
        out = out[0]

    def grad_fn(g):
        gb = g if batched else g[None]
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], gb[..., None], axis=-1)
        gwin = gflat.reshape(b, c, t2, h2, w2, pt, ph, pw).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        gx = np.zeros_like(xb)
        gx[:, :, : t2 * pt, : h2 * ph, : w2 * pw] = gwin.reshape(b, c, t2 * pt, h2 * ph, w2 * pw)
        x._accumulate(gx if batched else gx[0])

    return _make(np.ascontiguousarray(out), (x,), grad_fn)
