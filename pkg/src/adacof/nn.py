"""Batched neural-network primitives with explicit vector-Jacobian products.

Every primitive takes (B, C, H, W) arrays and returns (output, vjp); the
vjp maps an upstream gradient back to input (and parameter) gradients.
The model composes these closures into a tape, so no framework semantics
are assumed anywhere.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3(x, kernel, bias):
    """Same-padded 3x3 convolution; vjp returns (gx, gkernel, gbias)."""
    b, c, h, w = x.shape
    o = kernel.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B,C,H,W,3,3)
    cols_mat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)
    kmat = kernel.reshape(o, c * 9)
    y = (cols_mat @ kmat.T + bias).reshape(b, h, w, o).transpose(0, 3, 1, 2)

    def vjp(gy):
        gy_mat = gy.transpose(0, 2, 3, 1).reshape(b * h * w, o)
        gk = (gy_mat.T @ cols_mat).reshape(kernel.shape)
        gb = gy_mat.sum(axis=0)
        krot = kernel[:, :, ::-1, ::-1]
        krot_mat = krot.transpose(0, 2, 3, 1).reshape(o * 9, c)
        gyp = np.pad(gy, ((0, 0), (0, 0), (2, 2), (2, 2)))
        gyw = sliding_window_view(gyp, (3, 3), axis=(2, 3))
        gyw_mat = gyw.transpose(0, 2, 3, 1, 4, 5).reshape(b * (h + 2) * (w + 2), o * 9)
        gxp = (gyw_mat @ krot_mat).reshape(b, h + 2, w + 2, c).transpose(0, 3, 1, 2)
        return gxp[:, :, 1:h + 1, 1:w + 1], gk, gb

    return y, vjp


def relu(x):
    y = np.maximum(x, 0.0)
    mask = x > 0.0
    return y, lambda gy: gy * mask


def avgpool2(x):
    """2x2 average pooling with stride 2; height/width must be even."""
    b, c, h, w = x.shape
    y = x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def vjp(gy):
        return np.repeat(np.repeat(gy, 2, axis=2), 2, axis=3) * 0.25

    return y, vjp


def _upsample_matrix(n):
    """(2n, n) bilinear interpolation matrix (half-pixel-centered, clamped)."""
    src = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0, n - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    f = src - i0
    m = np.zeros((2 * n, n))
    np.add.at(m, (np.arange(2 * n), i0), 1.0 - f)
    np.add.at(m, (np.arange(2 * n), i1), f)
    return m


def upsample_bilinear2(x):
    """Bilinear 2x upsampling along both spatial axes."""
    b, c, h, w = x.shape
    my = _upsample_matrix(h)
    mx = _upsample_matrix(w)
    y = np.einsum("ph,bchw->bcpw", my, x, optimize=True)
    y = np.einsum("qw,bcpw->bcpq", mx, y, optimize=True)

    def vjp(gy):
        gx = np.einsum("qw,bcpq->bcpw", mx, gy, optimize=True)
        return np.einsum("ph,bcpw->bchw", my, gx, optimize=True)

    return y, vjp


def concat_channels(a, b):
    ca = a.shape[1]
    y = np.concatenate([a, b], axis=1)
    return y, lambda gy: (gy[:, :ca], gy[:, ca:])


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x))
    return y, lambda gy: gy * y * (1.0 - y)


def softmax_channels(x):
    """Softmax over the channel axis at every pixel."""
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(gy):
        return y * (gy - (gy * y).sum(axis=1, keepdims=True))

    return y, vjp


def global_mean(x):
    """Mean over channels and space, (B, C, H, W) -> (B,)."""
    b = x.shape[0]
    n = x[0].size
    y = x.reshape(b, -1).mean(axis=1)

    def vjp(gy):
        return np.broadcast_to(gy[:, None, None, None] / n, x.shape).copy()

    return y, vjp
