"""Layers with explicit forward/backward passes.

Every layer caches what it needs during ``forward`` and consumes that cache
in ``backward``, which returns the gradient w.r.t. the layer input and adds
parameter gradients into ``Tensor.grad``. Calling ``backward`` without a
recorded forward pass raises :class:`GraphNotRecorded`.

Array layouts: 1D feature maps are ``(N, C, L)``, 2D maps ``(N, C, H, W)``,
dense activations ``(N, F)``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import BatchTooSmall, GraphNotRecorded, ShapeMismatch
from .tensor import DTYPE, Tensor


def out_length(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


# --------------------------------------------------------------------------
# functional cores


def conv1d_forward(x, weight, bias=None, stride: int = 1, padding: int = 0):
    """Cross-correlation of ``x`` (N, C_in, L) with ``weight`` (C_out, C_in, K)."""
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv1d: input {x.shape} vs kernel {weight.shape}")
    k = weight.shape[2]
    lo = out_length(x.shape[2], k, stride, padding)
    if lo < 1:
        raise ShapeMismatch(f"conv1d: length {x.shape[2]} too short for kernel {k}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = sliding_window_view(xp, k, axis=2)[:, :, : (lo - 1) * stride + 1 : stride]
    # (N, C, Lo, K) -> (N, Lo, C*K)
    cols = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(x.shape[0], lo, -1)
    # one GEMM over all (sample, position) rows
    out = (cols.reshape(-1, cols.shape[2]) @ weight.reshape(weight.shape[0], -1).T).reshape(x.shape[0], lo, -1)
    if bias is not None:
        out += bias
    return out.transpose(0, 2, 1), cols


def conv1d_backward(dout, cols, x_shape, weight, stride, padding):
    n, c, length = x_shape
    c_out, _, k = weight.shape
    lo = dout.shape[2]
    d = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(n * lo, c_out)
    cols2 = cols.reshape(n * lo, -1)
    dw = (d.T @ cols2).reshape(weight.shape)
    db = d.sum(axis=0)
    # (N*Lo, C*K) -> (N, C, K, Lo) so each tap scatters a contiguous slab
    dcols = np.ascontiguousarray((d @ weight.reshape(c_out, -1)).reshape(n, lo, c, k).transpose(0, 2, 3, 1))
    dxp = np.zeros((n, c, length + 2 * padding), dtype=DTYPE)
    span = (lo - 1) * stride + 1
    for q in range(k):
        dxp[:, :, q : q + span : stride] += dcols[:, :, q]
    dx = dxp[:, :, padding : padding + length] if padding else dxp
    return dx, dw, db


def conv2d_forward(x, weight, bias=None, stride: int = 1, padding: int = 0):
    """2D cross-correlation: S(i, j) = sum_mn X(i+m, j+n) K(m, n) per channel pair.

    Accepts plain 2D arrays for single-channel use, e.g. ``conv2d_forward(I, K)[0]``.
    """
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    if x.ndim == 2:
        x = x[None, None]
    if weight.ndim == 2:
        weight = weight[None, None]
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernel {weight.shape}")
    kh, kw = weight.shape[2:]
    oh = out_length(x.shape[2], kh, stride, padding)
    ow = out_length(x.shape[3], kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"conv2d: input {x.shape[2:]} too small for kernel {(kh, kw)}")
    pw = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x, pw) if padding else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    # (N, C, OH, OW, KH, KW) -> (N, OH*OW, C*KH*KW)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(x.shape[0], oh * ow, -1)
    out = cols @ weight.reshape(weight.shape[0], -1).T
    if bias is not None:
        out += bias
    out = out.reshape(x.shape[0], oh, ow, -1).transpose(0, 3, 1, 2)
    return out, cols


def conv2d_backward(dout, cols, x_shape, weight, stride, padding):
    n, c, h, w = x_shape
    c_out, _, kh, kw = weight.shape
    oh, ow = dout.shape[2:]
    d = dout.transpose(0, 2, 3, 1).reshape(n, oh * ow, c_out)
    dw = np.tensordot(d, cols, axes=([0, 1], [0, 1])).reshape(weight.shape)
    db = d.sum(axis=(0, 1))
    dcols = (d @ weight.reshape(c_out, -1)).reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=DTYPE)
    sh, sw = (oh - 1) * stride + 1, (ow - 1) * stride + 1
    for p in range(kh):
        for q in range(kw):
            dxp[:, :, p : p + sh : stride, q : q + sw : stride] += dcols[..., p, q].transpose(0, 3, 1, 2)
    dx = dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp
    return dx, dw, db


def maxpool_forward(x, window: int, stride: int | None = None):
    """Max pooling over the trailing spatial axes (1D: (N,C,L), 2D: (N,C,H,W) or (H,W)).

    Returns ``(out, argmax)`` where argmax indexes the flattened window.
    """
    x = np.asarray(x, dtype=DTYPE)
    stride = stride or window
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None, None]
    spatial = x.ndim - 2
    if spatial not in (1, 2):
        raise ShapeMismatch(f"maxpool: unsupported input rank {x.ndim}")
    sizes = [out_length(s, window, stride, 0) for s in x.shape[2:]]
    if min(sizes) < 1:
        raise ShapeMismatch(f"maxpool: input {x.shape[2:]} smaller than window {window}")
    axes = tuple(range(2, x.ndim))
    win = sliding_window_view(x, (window,) * spatial, axis=axes)
    sl = tuple(slice(0, (o - 1) * stride + 1, stride) for o in sizes)
    win = win[(slice(None), slice(None)) + sl]
    flat = win.reshape(win.shape[: 2 + spatial] + (-1,))
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if squeeze:
        return out[0, 0], arg[0, 0]
    return out, arg


def maxpool_backward(dout, arg, x_shape, window, stride):
    dx = np.zeros(x_shape, dtype=DTYPE)
    spatial = len(x_shape) - 2
    if spatial == 1:
        lo = dout.shape[2]
        for q in range(window):
            dx[:, :, q : q + (lo - 1) * stride + 1 : stride] += np.where(arg == q, dout, 0.0)
    else:
        oh, ow = dout.shape[2:]
        for p in range(window):
            for q in range(window):
                sel = np.where(arg == p * window + q, dout, 0.0)
                dx[:, :, p : p + (oh - 1) * stride + 1 : stride, q : q + (ow - 1) * stride + 1 : stride] += sel
    return dx


# --------------------------------------------------------------------------
# modules


class Module:
    """Base class. Subclasses implement ``forward`` and ``backward``."""

    def __init__(self):
        self._cache = None

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_parameters(self, prefix: str = ""):
        out = []
        for name, value in self.__dict__.items():
            if isinstance(value, Tensor):
                out.append((prefix + name, value))
            elif isinstance(value, Module):
                out += value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, m in enumerate(value):
                    if isinstance(m, Module):
                        out += m.named_parameters(f"{prefix}{name}.{i}.")
        return out

    def named_buffers(self, prefix: str = ""):
        out = [(prefix + k, v) for k, v in getattr(self, "_buffers", {}).items()]
        for name, value in self.__dict__.items():
            if isinstance(value, Module):
                out += value.named_buffers(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, m in enumerate(value):
                    if isinstance(m, Module):
                        out += m.named_buffers(f"{prefix}{name}.{i}.")
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def modules(self):
        yield self
        for value in self.__dict__.values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for m in value:
                    if isinstance(m, Module):
                        yield from m.modules()

    def _need_cache(self):
        if self._cache is None:
            raise GraphNotRecorded(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache

    def __call__(self, x, train: bool = False, rng=None):
        return self.forward(x, train=train, rng=rng)


def kaiming_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None, bias=True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        self.weight = Tensor(kaiming_uniform(rng, (c_out, c_in, kernel), c_in * kernel))
        self.bias = Tensor(np.zeros(c_out)) if bias else None

    def forward(self, x, train=False, rng=None):
        b = self.bias.data if self.bias is not None else None
        out, cols = conv1d_forward(x, self.weight.data, b, self.stride, self.padding)
        self._cache = (cols, x.shape)
        return out

    def backward(self, dout):
        cols, shape = self._need_cache()
        dx, dw, db = conv1d_backward(dout, cols, shape, self.weight.data, self.stride, self.padding)
        self.weight.accumulate(dw)
        if self.bias is not None:
            self.bias.accumulate(db)
        return dx


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None, bias=True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.padding = stride, padding
        self.weight = Tensor(kaiming_uniform(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel))
        self.bias = Tensor(np.zeros(c_out)) if bias else None

    def forward(self, x, train=False, rng=None):
        b = self.bias.data if self.bias is not None else None
        out, cols = conv2d_forward(x, self.weight.data, b, self.stride, self.padding)
        self._cache = (cols, x.shape)
        return out

    def backward(self, dout):
        cols, shape = self._need_cache()
        dx, dw, db = conv2d_backward(dout, cols, shape, self.weight.data, self.stride, self.padding)
        self.weight.accumulate(dw)
        if self.bias is not None:
            self.bias.accumulate(db)
        return dx


class MaxPool(Module):
    """Max pooling over 1D or 2D maps (dimensionality taken from the input)."""

    def __init__(self, window, stride=None):
        super().__init__()
        self.window, self.stride = window, stride or window

    def forward(self, x, train=False, rng=None):
        out, arg = maxpool_forward(x, self.window, self.stride)
        self._cache = (arg, x.shape)
        return out

    def backward(self, dout):
        arg, shape = self._need_cache()
        return maxpool_backward(dout, arg, shape, self.window, self.stride)


class BatchNorm(Module):
    """Batch normalization over every axis except channels (axis 1).

    Train mode normalizes with batch statistics (biased variance) and updates
    running statistics with the unbiased variance; eval mode uses the
    running statistics only.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Tensor(np.ones(channels))
        self.beta = Tensor(np.zeros(channels))
        self._buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}

    def _axes(self, x):
        return (0,) + tuple(range(2, x.ndim))

    def _bshape(self, x):
        return (1, -1) + (1,) * (x.ndim - 2)

    def forward(self, x, train=False, rng=None):
        axes, bs = self._axes(x), self._bshape(x)
        if train:
            if x.shape[0] < 2:
                raise BatchTooSmall("batch normalization needs at least 2 samples in train mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // x.shape[1]
            rb = self._buffers
            rb["running_mean"] = (1 - self.momentum) * rb["running_mean"] + self.momentum * mean
            rb["running_var"] = (1 - self.momentum) * rb["running_var"] + self.momentum * var * m / max(m - 1, 1)
        else:
            mean, var = self._buffers["running_mean"], self._buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bs)) * inv.reshape(bs)
        self._cache = (xhat, inv, train)
        return xhat * self.gamma.data.reshape(bs) + self.beta.data.reshape(bs)

    def backward(self, dout):
        xhat, inv, train = self._need_cache()
        axes, bs = self._axes(dout), self._bshape(dout)
        self.gamma.accumulate((dout * xhat).sum(axis=axes))
        self.beta.accumulate(dout.sum(axis=axes))
        dxhat = dout * self.gamma.data.reshape(bs)
        if not train:
            return dxhat * inv.reshape(bs)
        mean_d = dxhat.mean(axis=axes, keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=axes, keepdims=True)
        return (dxhat - mean_d - xhat * mean_dx) * inv.reshape(bs)


class Dense(Module):
    """Affine map y = x W^T + b with W of shape (out, in)."""

    def __init__(self, n_in, n_out, rng=None, bias=True):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(kaiming_uniform(rng, (n_out, n_in), n_in))
        self.bias = Tensor(np.zeros(n_out)) if bias else None

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[1]:
            raise ShapeMismatch(f"dense: input {x.shape} vs weight {self.weight.shape}")
        self._cache = x
        out = x @ self.weight.data.T
        if self.bias is not None:
            out += self.bias.data
        return out

    def backward(self, dout):
        x = self._need_cache()
        self.weight.accumulate(dout.T @ x)
        if self.bias is not None:
            self.bias.accumulate(dout.sum(axis=0))
        return dout @ self.weight.data


class ReLU(Module):
    def forward(self, x, train=False, rng=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


class Dropout(Module):
    """Inverted dropout; identity in eval mode. Train mode needs an explicit rng."""

    def __init__(self, p=0.5):
        super().__init__()
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0:
            self._cache = np.ones((), dtype=DTYPE)
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an explicit rng")
        keep = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        self._cache = keep
        return x * keep

    def backward(self, dout):
        return dout * self._need_cache()


class Flatten(Module):
    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class GlobalAvgPool(Module):
    """Mean over all spatial axes: (N, C, ...) -> (N, C)."""

    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], x.shape[1], -1).mean(axis=2)

    def backward(self, dout):
        shape = self._need_cache()
        spatial = int(np.prod(shape[2:]))
        return np.broadcast_to((dout / spatial).reshape(dout.shape + (1,) * (len(shape) - 2)), shape).copy()


class L2Normalize(Module):
    """Project rows onto the unit hypersphere."""

    def __init__(self, eps=1e-12):
        super().__init__()
        self.eps = eps

    def forward(self, x, train=False, rng=None):
        norm = np.sqrt((x * x).sum(axis=1, keepdims=True)) + self.eps
        y = x / norm
        self._cache = (y, norm)
        return y

    def backward(self, dout):
        y, norm = self._need_cache()
        return (dout - y * (dout * y).sum(axis=1, keepdims=True)) / norm


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout


class ResidualBlock1d(Module):
    """y = F(x) + P(x), with P the identity or a 1x1 projection when shapes differ.

    F is conv3 -> BN -> ReLU -> conv3 -> BN. The activation after the sum is
    left to the caller.
    """

    def __init__(self, c_in, c_out, stride=1, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.branch = Sequential(
            Conv1d(c_in, c_out, 3, stride, 1, rng=rng, bias=False),
            BatchNorm(c_out),
            ReLU(),
            Conv1d(c_out, c_out, 3, 1, 1, rng=rng, bias=False),
            BatchNorm(c_out),
        )
        self.projection = None
        if stride != 1 or c_in != c_out:
            self.projection = Sequential(Conv1d(c_in, c_out, 1, stride, 0, rng=rng, bias=False), BatchNorm(c_out))

    def forward(self, x, train=False, rng=None):
        f = self.branch.forward(x, train=train, rng=rng)
        skip = x if self.projection is None else self.projection.forward(x, train=train, rng=rng)
        if f.shape != skip.shape:
            raise ShapeMismatch(f"residual: branch {f.shape} vs skip {skip.shape}")
        self._cache = True
        return f + skip

    def backward(self, dout):
        self._need_cache()
        dx = self.branch.backward(dout)
        if self.projection is None:
            return dx + dout
        return dx + self.projection.backward(dout)


class Parallel(Module):
    """Apply one module per channel slice of the input and concatenate along channels."""

    def __init__(self, branches, splits):
        super().__init__()
        self.branches = list(branches)
        self.splits = list(splits)  # channel counts per branch
        if len(self.branches) != len(self.splits):
            raise ValueError("one channel count per branch")

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != sum(self.splits):
            raise ShapeMismatch(f"parallel: expected {sum(self.splits)} channels, got {x.shape[1]}")
        edges = np.cumsum([0] + self.splits)
        outs = [b.forward(x[:, lo:hi], train=train, rng=rng) for b, lo, hi in zip(self.branches, edges[:-1], edges[1:])]
        self._cache = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, dout):
        widths = self._need_cache()
        edges = np.cumsum([0] + widths)
        grads = [b.backward(dout[:, lo:hi]) for b, lo, hi in zip(self.branches, edges[:-1], edges[1:])]
        return np.concatenate(grads, axis=1)
