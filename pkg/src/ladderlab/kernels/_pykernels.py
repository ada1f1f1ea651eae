"""Numpy kernel backend.

Vectorized im2col-style implementations of the convolution and pooling
primitives. Shares its signature set with the compiled backend; the package
selects one of the two at import time (see ``kernels/__init__``).

Layout is NCHW throughout, float32 in and out.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view

BACKEND = "numpy"


def _f32(a):
    return np.ascontiguousarray(a, dtype=np.float32)


def conv2d_fwd(x, w, sh, sw, ph, pw):
    """y[n,f,i,j] = sum_{c,p,q} x[n,c,i*sh+p-ph, j*sw+q-pw] * w[f,c,p,q]."""
    x = _f32(x)
    w = _f32(w)
    kh, kw = w.shape[2], w.shape[3]
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return _f32(y.transpose(0, 3, 1, 2))


def conv2d_dx(dy, w, sh, sw, ph, pw, H, W):
    """Gradient of conv2d_fwd w.r.t. x; also the transposed-conv forward."""
    dy = _f32(dy)
    w = _f32(w)
    N, F, Ho, Wo = dy.shape
    C, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    # Dilate by the stride, then full-correlate with the rotated kernel.
    dil = np.zeros((N, F, (Ho - 1) * sh + 1, (Wo - 1) * sw + 1), dtype=np.float32)
    dil[:, :, ::sh, ::sw] = dy
    w_rot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    full = conv2d_fwd(dil, w_rot, 1, 1, kh - 1, kw - 1)
    # Rows/cols of the padded input beyond the last window get zero gradient.
    dxpad = np.zeros((N, C, H + 2 * ph, W + 2 * pw), dtype=np.float32)
    dxpad[:, :, : full.shape[2], : full.shape[3]] = full
    return _f32(dxpad[:, :, ph : ph + H, pw : pw + W])


def conv2d_dw(dy, x, sh, sw, ph, pw, kh, kw):
    """Gradient of conv2d_fwd w.r.t. w."""
    dy = _f32(dy)
    x = _f32(x)
    N, C = x.shape[0], x.shape[1]
    Ho, Wo = dy.shape[2], dy.shape[3]
    xpad = np.ascontiguousarray(np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))))
    sn, sc, sr, scol = xpad.strides
    view = as_strided(
        xpad,
        shape=(N, C, kh, kw, Ho, Wo),
        strides=(sn, sc, sr, scol, sh * sr, sw * scol),
        writeable=False,
    )
    dw = np.tensordot(dy, view, axes=([0, 2, 3], [0, 4, 5]))
    return _f32(dw)


def maxpool_fwd(x, k):
    """Non-overlapping k*k max pooling (stride = k). Returns (y, argmax).

    argmax holds the within-window flat offset (0..k*k-1) used by the
    backward scatter.
    """
    x = _f32(x)
    N, C, H, W = x.shape
    Ho, Wo = H // k, W // k
    win = x.reshape(N, C, Ho, k, Wo, k).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(N, C, Ho, Wo, k * k)
    idx = flat.argmax(axis=4)
    y = np.take_along_axis(flat, idx[..., None], axis=4)[..., 0]
    return _f32(y), idx.astype(np.int64)


def maxpool_bwd(dy, idx, k, H, W):
    """Scatter dy back to the argmax positions."""
    dy = _f32(dy)
    N, C, Ho, Wo = dy.shape
    dx = np.zeros((N, C, H, W), dtype=np.float32)
    n, c, i, j = np.indices((N, C, Ho, Wo))
    hi = i * k + idx // k
    wi = j * k + idx % k
    dx[n, c, hi, wi] = dy
    return dx
