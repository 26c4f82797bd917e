"""Differentiable layers on (batch, channel, height, width) arrays.

Every forward function returns ``(output, cache)``; the matching
``*_backward`` takes the upstream gradient and that cache. Functions are
dtype-preserving so the same code runs in float32 for training and in
float64 for gradient checks.
"""
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError


def _check4(x, what="input"):
    if x.ndim != 4:
        raise ShapeError(f"{what} must be 4-D (n, c, h, w), got shape {x.shape}")


def conv2d(x, weight, bias=None, stride=1, pad=0):
    """2-D cross-correlation via im2col.

    Parameters
    ----------
    x : ndarray, shape (n, c_in, h, w)
    weight : ndarray, shape (c_out, c_in, k, k), k odd
    bias : ndarray of shape (c_out,) or None
    stride, pad : int

    Returns
    -------
    out : ndarray, shape (n, c_out, ho, wo)
    cache : tuple for :func:`conv2d_backward`
    """
    _check4(x)
    c_out, c_in, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ConfigError(f"kernel must be square with odd size, got {k}x{k2}")
    if x.shape[1] != c_in:
        raise ConfigError(f"conv2d expects {c_in} input channels, got {x.shape[1]}")
    if stride < 1 or pad < 0:
        raise ConfigError(f"invalid stride={stride} / pad={pad}")
    n, _, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} too small for kernel {k} with pad {pad}")

    if k == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride] if stride > 1 else x
        cols = xs.transpose(1, 0, 2, 3).reshape(c_in, -1)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
        # (n, c, ho, wo, k, k) -> (c, k, k, n, ho, wo)
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c_in * k * k, n * ho * wo)

    out = weight.reshape(c_out, -1) @ cols
    out = out.reshape(c_out, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.reshape(1, c_out, 1, 1)
    else:
        out = np.ascontiguousarray(out)
    return out, (x.shape, cols, weight, stride, pad, bias is not None)


def conv2d_backward(dout, cache):
    """Return ``(dx, dweight, dbias)``; ``dbias`` is None for bias-free convs."""
    x_shape, cols, weight, stride, pad, has_bias = cache
    n, c_in, h, w = x_shape
    c_out, _, k, _ = weight.shape
    _, _, ho, wo = dout.shape

    dmat = dout.transpose(1, 0, 2, 3).reshape(c_out, -1)
    dweight = (dmat @ cols.T).reshape(weight.shape)
    dbias = dmat.sum(axis=1) if has_bias else None
    dcols = weight.reshape(c_out, -1).T @ dmat

    if k == 1 and pad == 0:
        dxs = dcols.reshape(c_in, n, ho, wo).transpose(1, 0, 2, 3)
        if stride == 1:
            return np.ascontiguousarray(dxs), dweight, dbias
        dx = np.zeros(x_shape, dtype=dout.dtype)
        dx[:, :, ::stride, ::stride] = dxs
        return dx, dweight, dbias

    dcols = dcols.reshape(c_in, k, k, n, ho, wo)
    dxp = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad), dtype=dout.dtype)
    hs, ws = (ho - 1) * stride + 1, (wo - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + hs : stride, j : j + ws : stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
    dx = dxp[:, :, pad : pad + h, pad : pad + w] if pad else dxp
    return np.ascontiguousarray(dx), dweight, dbias


def relu(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def pool_down2x(x):
    """2x2 max pooling. Ties route the gradient to the first maximum in scan order."""
    _check4(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max pooling needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def pool_down2x_backward(dout, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    onehot = idx[..., None] == np.arange(4)
    dwin = onehot * dout[..., None]
    dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)
    return dx


def avg_pool2x(x):
    _check4(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"average pooling needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


@lru_cache(maxsize=64)
def _bilinear_matrix(size, dtype_name):
    # Rows: output samples 0..2*size-1, align_corners=False, source index clamped at the borders.
    m = np.zeros((2 * size, size), dtype=np.float64)
    for o in range(2 * size):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        lo = min(int(np.floor(src)), size - 1)
        hi = min(lo + 1, size - 1)
        frac = src - lo
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    m = m.astype(dtype_name)
    m.setflags(write=False)
    return m


def upsample2x(x):
    """Bilinear 2x upsampling (align_corners=False convention)."""
    _check4(x)
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError(f"cannot upsample empty image {h}x{w}")
    mh = _bilinear_matrix(h, x.dtype.name)
    mw = _bilinear_matrix(w, x.dtype.name)
    return mh @ x @ mw.T, (mh, mw)


def upsample2x_backward(dout, cache):
    mh, mw = cache
    return mh.T @ dout @ mw


def resize_bilinear(x, out_h, out_w):
    """Forward-only bilinear resize (align_corners=False); used for mismatched fusion shapes."""
    _check4(x)
    _, _, h, w = x.shape
    mh = _resize_matrix(h, out_h, x.dtype.name)
    mw = _resize_matrix(w, out_w, x.dtype.name)
    return mh @ x @ mw.T, (mh, mw)


@lru_cache(maxsize=64)
def _resize_matrix(src_size, dst_size, dtype_name):
    m = np.zeros((dst_size, src_size), dtype=np.float64)
    scale = src_size / dst_size
    for o in range(dst_size):
        src = max((o + 0.5) * scale - 0.5, 0.0)
        lo = min(int(np.floor(src)), src_size - 1)
        hi = min(lo + 1, src_size - 1)
        frac = src - lo
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    m = m.astype(dtype_name)
    m.setflags(write=False)
    return m


def concat_channels(tensors):
    return np.concatenate(tensors, axis=1), [t.shape[1] for t in tensors]


def concat_channels_backward(dout, sizes):
    splits = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(part) for part in np.split(dout, splits, axis=1)]
