"""Dense-tensor reverse-mode engine for the layers the segmentation net uses.

Tensors wrap numpy arrays (float32 by default, float64 on request) and ops
record backward closures on the output node; :func:`backward` walks the
recorded graph once in reverse topological order. Convolutions are computed
as one GEMM per kernel tap over strided views, which keeps peak memory at a
couple of activation buffers instead of an im2col matrix.

Statistics (batch-norm moments, full-tensor sums) accumulate in float64
regardless of storage dtype.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (eval-mode forward)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_backward_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, lambda a, b: a + b,
                       lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, lambda a, b: a - b,
                       lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _binary(self, other, lambda a, b: b - a,
                       lambda g, a, b: -g, lambda g, a, b: g)

    def __mul__(self, other):
        return _binary(self, other, lambda a, b: a * b,
                       lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, lambda a, b: a / b,
                       lambda g, a, b: g / b, lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        return _binary(self, other, lambda a, b: b / a,
                       lambda g, a, b: -g * b / (a * a), lambda g, a, b: g / a)

    def __neg__(self):
        return self * -1.0

    def sum(self) -> "Tensor":
        out = _node(np.asarray(self.data.sum(dtype=np.float64), dtype=self.dtype),
                    (self,))
        if out._backward_fn is _PENDING:
            def back(g):
                _accum(self, np.broadcast_to(g, self.data.shape))
            out._backward_fn = back
        return out

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)


_PENDING = object()


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    """Output tensor wired into the graph when recording is on."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = _PENDING
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, fwd, back_a, back_b) -> Tensor:
    ta = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=a_dtype(b)))
    tb = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=ta.dtype))
    out = _node(fwd(ta.data, tb.data), (ta, tb))
    if out._backward_fn is _PENDING:
        def back(g):
            _accum(ta, _unbroadcast(back_a(g, ta.data, tb.data), ta.data.shape))
            _accum(tb, _unbroadcast(back_b(g, ta.data, tb.data), tb.data.shape))
        out._backward_fn = back
    return out


def a_dtype(x) -> np.dtype:
    return x.dtype if isinstance(x, Tensor) else np.dtype(np.float32)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires-grad tensor reachable from a
    scalar loss. Running it twice on the same forward graph is an error."""
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    if loss._backward_done:
        raise RuntimeError("backward already ran for this graph; rerun forward")
    loss._backward_done = True

    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or node._backward_fn is None:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node.grad is not None:
            node._backward_fn(node.grad)
            node._backward_fn = None  # release closures as we go


# --------------------------------------------------------------------------
# pointwise nonlinearities and shape ops
# --------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0), (x,))
    if out._backward_fn is _PENDING:
        mask = x.data > 0
        out._backward_fn = lambda g: _accum(x, g * mask)
    return out


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    s = s.astype(x.dtype)
    out = _node(s, (x,))
    if out._backward_fn is _PENDING:
        out._backward_fn = lambda g: _accum(x, g * s * (1.0 - s))
    return out


def log(x: Tensor) -> Tensor:
    out = _node(np.log(x.data), (x,))
    if out._backward_fn is _PENDING:
        out._backward_fn = lambda g: _accum(x, g / x.data)
    return out


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where no clamping happened."""
    out = _node(np.clip(x.data, lo, hi), (x,))
    if out._backward_fn is _PENDING:
        inside = (x.data > lo) & (x.data < hi)
        out._backward_fn = lambda g: _accum(x, g * inside)
    return out


def concat(a: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    out = _node(np.concatenate([a.data, b.data], axis=axis), (a, b))
    if out._backward_fn is _PENDING:
        na = a.data.shape[axis]
        def back(g):
            ga, gb = np.split(g, [na], axis=axis)
            _accum(a, ga)
            _accum(b, gb)
        out._backward_fn = back
    return out


# --------------------------------------------------------------------------
# convolutions: one GEMM per kernel tap
# --------------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, *,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. x: (N,C,H,W), w: (F,C,kh,kw), b: (F,)."""
    N, C, H, W = x.shape
    F, Cw, kh, kw = w.shape
    if C != Cw:
        raise ValueError(f"channel mismatch: input {C}, kernel {Cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {kh}x{kw}")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ValueError("kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # tap-major weight layout: wt[di, dj] is a contiguous (F, C) matrix, so
    # every matmul below stays on the BLAS fast path
    wt = np.ascontiguousarray(w.data.transpose(2, 3, 0, 1))
    out = np.zeros((N, F, Ho, Wo), dtype=x.dtype)
    of = out.reshape(N, F, Ho * Wo)
    for di in range(kh):
        for dj in range(kw):
            tap = xp[:, :, di : di + stride * Ho : stride,
                     dj : dj + stride * Wo : stride]
            of += np.matmul(wt[di, dj], tap.reshape(N, C, Ho * Wo))
    if b is not None:
        out += b.data.reshape(1, F, 1, 1)

    parents = (x, w) if b is None else (x, w, b)
    res = _node(out, parents)
    if res._backward_fn is _PENDING:
        def back(g):
            gf = np.ascontiguousarray(g.reshape(N, F, Ho * Wo))
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for di in range(kh):
                    for dj in range(kw):
                        view = dxp[:, :, di : di + stride * Ho : stride,
                                   dj : dj + stride * Wo : stride]
                        view += np.matmul(wt[di, dj].T, gf).reshape(
                            N, C, Ho, Wo)
                if padding:
                    dxp = dxp[:, :, padding : padding + H, padding : padding + W]
                _accum(x, dxp)
            if w.requires_grad:
                dw = np.empty_like(w.data)
                gm = gf.transpose(1, 0, 2).reshape(F, N * Ho * Wo)
                for di in range(kh):
                    for dj in range(kw):
                        tap = xp[:, :, di : di + stride * Ho : stride,
                                 dj : dj + stride * Wo : stride]
                        tm = tap.transpose(1, 0, 2, 3).reshape(C, N * Ho * Wo)
                        dw[:, :, di, dj] = np.matmul(gm, tm.T)
                _accum(w, dw)
            if b is not None:
                _accum(b, g.sum(axis=(0, 2, 3)))
        res._backward_fn = back
    return res


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, *,
                     stride: int = 2) -> Tensor:
    """Adjoint of conv2d; upsamples by exactly ``stride``.

    x: (N,C,H,W), w: (C,F,kh,kw) with square kernels satisfying
    (k - stride) even so the implied padding makes output = input*stride.
    """
    N, C, H, W = x.shape
    Cw, F, kh, kw = w.shape
    if C != Cw:
        raise ValueError(f"channel mismatch: input {C}, kernel {Cw}")
    if kh != kw:
        raise ValueError("square kernels only")
    if kh < stride or (kh - stride) % 2:
        raise ValueError(
            f"kernel {kh} with stride {stride} cannot double exactly")
    pad = (kh - stride) // 2
    Ho, Wo = H * stride, W * stride

    full = np.zeros((N, F, (H - 1) * stride + kh, (W - 1) * stride + kw),
                    dtype=x.dtype)
    wt = np.ascontiguousarray(w.data.transpose(2, 3, 0, 1))  # (kh, kw, C, F)
    xf = np.ascontiguousarray(x.data.reshape(N, C, H * W))
    for di in range(kh):
        for dj in range(kw):
            view = full[:, :, di : di + stride * H : stride,
                        dj : dj + stride * W : stride]
            view += np.matmul(wt[di, dj].T, xf).reshape(N, F, H, W)
    out = full[:, :, pad : pad + Ho, pad : pad + Wo]
    if pad:
        out = out.copy()
    if b is not None:
        out += b.data.reshape(1, F, 1, 1)

    parents = (x, w) if b is None else (x, w, b)
    res = _node(out, parents)
    if res._backward_fn is _PENDING:
        def back(g):
            gfull = np.zeros_like(full)
            gfull[:, :, pad : pad + Ho, pad : pad + Wo] = g
            if x.requires_grad:
                dx = np.zeros_like(x.data)
                dxf = dx.reshape(N, C, H * W)
                for di in range(kh):
                    for dj in range(kw):
                        tap = gfull[:, :, di : di + stride * H : stride,
                                    dj : dj + stride * W : stride]
                        dxf += np.matmul(wt[di, dj],
                                         tap.reshape(N, F, H * W))
                _accum(x, dx)
            if w.requires_grad:
                dw = np.empty_like(w.data)
                xm = x.data.transpose(1, 0, 2, 3).reshape(C, N * H * W)
                for di in range(kh):
                    for dj in range(kw):
                        tap = gfull[:, :, di : di + stride * H : stride,
                                    dj : dj + stride * W : stride]
                        tm = tap.transpose(1, 0, 2, 3).reshape(F, N * H * W)
                        dw[:, :, di, dj] = np.matmul(xm, tm.T)
                _accum(w, dw)
            if b is not None:
                _accum(b, g.sum(axis=(0, 2, 3)))
        res._backward_fn = back
    return res


# --------------------------------------------------------------------------
# pooling
# --------------------------------------------------------------------------

def _pool_view(x: np.ndarray):
    N, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"2x2 pooling needs even spatial dims, got {H}x{W}")
    return x.reshape(N, C, H // 2, 2, W // 2, 2)


def avg_pool2(x: Tensor) -> Tensor:
    v = _pool_view(x.data)
    out = _node(v.mean(axis=(3, 5)), (x,))
    if out._backward_fn is _PENDING:
        def back(g):
            gx = np.broadcast_to(g[:, :, :, None, :, None] * 0.25, v.shape)
            _accum(x, gx.reshape(x.data.shape))
        out._backward_fn = back
    return out


def max_pool2(x: Tensor) -> Tensor:
    v = _pool_view(x.data)
    flat = v.transpose(0, 1, 2, 4, 3, 5).reshape(*v.shape[:3], v.shape[4], 4)
    idx = flat.argmax(axis=-1)
    out = _node(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0], (x,))
    if out._backward_fn is _PENDING:
        def back(g):
            gx = np.zeros_like(flat)
            np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
            gx = gx.reshape(*v.shape[:3], v.shape[4], 2, 2).transpose(
                0, 1, 2, 4, 3, 5)
            _accum(x, gx.reshape(x.data.shape))
        out._backward_fn = back
    return out


# --------------------------------------------------------------------------
# batch norm and spatial dropout
# --------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Running per-channel moments, updated in train mode, read in eval."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def initial(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool, eps: float = 1e-5,
               momentum: float = 0.1) -> Tensor:
    """Per-channel normalization over (batch, height, width).

    Train mode normalizes with the biased batch moments (accumulated in
    float64) and folds them into the running state; eval mode uses the
    state and treats it as constant.
    """
    N, C, H, W = x.shape
    if training:
        mu = x.data.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.data.var(axis=(0, 2, 3), dtype=np.float64)
        state.mean[:] = (1 - momentum) * state.mean + momentum * mu
        state.var[:] = (1 - momentum) * state.var + momentum * var
    else:
        mu = state.mean.astype(np.float64)
        var = state.var.astype(np.float64)

    ivstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    mu = mu.astype(x.dtype)
    xhat = (x.data - mu.reshape(1, C, 1, 1)) * ivstd.reshape(1, C, 1, 1)
    out = _node(gamma.data.reshape(1, C, 1, 1) * xhat
                + beta.data.reshape(1, C, 1, 1), (x, gamma, beta))
    if out._backward_fn is _PENDING:
        def back(g):
            if gamma.requires_grad:
                _accum(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            if beta.requires_grad:
                _accum(beta, g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                gx = g * gamma.data.reshape(1, C, 1, 1)
                iv = ivstd.reshape(1, C, 1, 1)
                if training:
                    m = N * H * W
                    s1 = gx.sum(axis=(0, 2, 3), keepdims=True)
                    s2 = (gx * xhat).sum(axis=(0, 2, 3), keepdims=True)
                    _accum(x, iv * (gx - s1 / m - xhat * s2 / m))
                else:
                    _accum(x, gx * iv)
        out._backward_fn = back
    return out


def spatial_dropout(x: Tensor, rate: float,
                    rng: np.random.Generator | int | None = None,
                    training: bool = True) -> Tensor:
    """Zero whole channels with probability ``rate`` and rescale survivors
    by 1/(1-rate); identity in eval mode or at rate 0."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        out = _node(x.data, (x,))
        if out._backward_fn is _PENDING:
            out._backward_fn = lambda g: _accum(x, g)
        return out
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    N, C = x.shape[:2]
    keep = (rng.random((N, C)) >= rate).astype(x.dtype) / (1.0 - rate)
    mask = keep.reshape(N, C, *([1] * (x.data.ndim - 2)))
    out = _node(x.data * mask, (x,))
    if out._backward_fn is _PENDING:
        out._backward_fn = lambda g: _accum(x, g * mask)
    return out
