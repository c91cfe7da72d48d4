"""Convolution and pooling kernels, numba and numpy flavours.

All kernels work on batched NHWC float64 arrays.  Convolutions are stride 1
and take an already padded input; 1D layers reuse them with ``H == 1``.
Pooling is non-overlapping with stride equal to the window and drops
trailing partial windows.

The public names at the bottom (``conv2d_forward`` ...) are bound to one
backend according to ``gridforge._accel.BACKEND``.  The ``_nb`` / ``_np``
variants stay importable for the benchmark and the cross-backend tests.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import BACKEND, njit

# ---------------------------------------------------------------------------
# numba loops
# ---------------------------------------------------------------------------


@njit
def _conv2d_forward_nb(x, k, b):
    n_batch, h, w, c_in = x.shape
    n_filt, kh, kw, _ = k.shape
    oh = h - kh + 1
    ow = w - kw + 1
    kt = np.ascontiguousarray(k.transpose(1, 2, 3, 0))
    out = np.empty((n_batch, oh, ow, n_filt))
    acc = np.empty(n_filt)
    for n in range(n_batch):
        for i in range(oh):
            for j in range(ow):
                for f in range(n_filt):
                    acc[f] = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        for c in range(c_in):
                            v = x[n, i + di, j + dj, c]
                            for f in range(n_filt):
                                acc[f] += kt[di, dj, c, f] * v
                for f in range(n_filt):
                    out[n, i, j, f] = acc[f] + b[f]
    return out


@njit
def _conv2d_backward_nb(x, k, dout, need_dx):
    n_batch, h, w, c_in = x.shape
    n_filt, kh, kw, _ = k.shape
    oh = dout.shape[1]
    ow = dout.shape[2]
    kt = np.ascontiguousarray(k.transpose(1, 2, 3, 0))
    dkt = np.zeros((kh, kw, c_in, n_filt))
    db = np.zeros(n_filt)
    dx = np.zeros((n_batch, h, w, c_in))
    for n in range(n_batch):
        for i in range(oh):
            for j in range(ow):
                for f in range(n_filt):
                    db[f] += dout[n, i, j, f]
                for di in range(kh):
                    for dj in range(kw):
                        for c in range(c_in):
                            v = x[n, i + di, j + dj, c]
                            s = 0.0
                            for f in range(n_filt):
                                g = dout[n, i, j, f]
                                dkt[di, dj, c, f] += g * v
                                s += kt[di, dj, c, f] * g
                            if need_dx:
                                dx[n, i + di, j + dj, c] += s
    dk = np.ascontiguousarray(dkt.transpose(3, 0, 1, 2))
    return dk, db, dx


@njit
def _maxpool_forward_nb(x, ph, pw):
    n_batch, h, w, c_in = x.shape
    oh = h // ph
    ow = w // pw
    out = np.empty((n_batch, oh, ow, c_in))
    arg = np.empty((n_batch, oh, ow, c_in), dtype=np.int64)
    for n in range(n_batch):
        for i in range(oh):
            for j in range(ow):
                for c in range(c_in):
                    best = x[n, i * ph, j * pw, c]
                    where = 0
                    for di in range(ph):
                        for dj in range(pw):
                            v = x[n, i * ph + di, j * pw + dj, c]
                            if v > best:
                                best = v
                                where = di * pw + dj
                    out[n, i, j, c] = best
                    arg[n, i, j, c] = where
    return out, arg


@njit
def _maxpool_backward_nb(dout, arg, in_shape, ph, pw):
    dx = np.zeros(in_shape)
    n_batch, oh, ow, c_in = dout.shape
    for n in range(n_batch):
        for i in range(oh):
            for j in range(ow):
                for c in range(c_in):
                    a = arg[n, i, j, c]
                    dx[n, i * ph + a // pw, j * pw + a % pw, c] += dout[n, i, j, c]
    return dx


# ---------------------------------------------------------------------------
# numpy (im2col + BLAS) versions
# ---------------------------------------------------------------------------


def _im2col(x, kh, kw):
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # N, oh, ow, C, kh, kw
    n_batch, oh, ow = win.shape[:3]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n_batch * oh * ow, -1)
    return cols, oh, ow


def _conv2d_forward_np(x, k, b):
    n_filt, kh, kw, _ = k.shape
    cols, oh, ow = _im2col(x, kh, kw)
    out = cols @ k.reshape(n_filt, -1).T + b
    return out.reshape(x.shape[0], oh, ow, n_filt)


def _conv2d_backward_np(x, k, dout, need_dx):
    n_filt, kh, kw, c_in = k.shape
    cols, oh, ow = _im2col(x, kh, kw)
    g = dout.reshape(-1, n_filt)
    dk = (g.T @ cols).reshape(k.shape)
    db = g.sum(axis=0)
    dx = np.zeros(x.shape)
    if need_dx:
        dcols = (g @ k.reshape(n_filt, -1)).reshape(x.shape[0], oh, ow, kh, kw, c_in)
        for di in range(kh):
            for dj in range(kw):
                dx[:, di:di + oh, dj:dj + ow, :] += dcols[:, :, :, di, dj, :]
    return dk, db, dx


def _pool_windows(x, ph, pw):
    n_batch, h, w, c_in = x.shape
    oh, ow = h // ph, w // pw
    v = x[:, :oh * ph, :ow * pw, :].reshape(n_batch, oh, ph, ow, pw, c_in)
    return v.transpose(0, 1, 3, 5, 2, 4).reshape(n_batch, oh, ow, c_in, ph * pw)


def _maxpool_forward_np(x, ph, pw):
    win = _pool_windows(x, ph, pw)
    arg = win.argmax(axis=-1)  # first maximiser in row-major window order
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _maxpool_backward_np(dout, arg, in_shape, ph, pw):
    n_batch, oh, ow, c_in = dout.shape
    win = np.zeros((n_batch, oh, ow, c_in, ph * pw))
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(n_batch, oh, ow, c_in, ph, pw).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(in_shape)
    dx[:, :oh * ph, :ow * pw, :] = win.reshape(n_batch, oh * ph, ow * pw, c_in)
    return dx


# Average pooling is a reshape + mean on both backends; it has no loop to
# accelerate.

def avgpool_forward(x, ph, pw):
    return _pool_windows(x, ph, pw).mean(axis=-1)


def avgpool_backward(dout, in_shape, ph, pw):
    n_batch, oh, ow, c_in = dout.shape
    g = np.repeat(np.repeat(dout / (ph * pw), ph, axis=1), pw, axis=2)
    dx = np.zeros(in_shape)
    dx[:, :oh * ph, :ow * pw, :] = g
    return dx


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


if BACKEND == "numba":
    def conv2d_forward(x, k, b):
        return _conv2d_forward_nb(_contig(x), _contig(k), _contig(b))

    def conv2d_backward(x, k, dout, need_dx=True):
        return _conv2d_backward_nb(_contig(x), _contig(k), _contig(dout), need_dx)

    def maxpool_forward(x, ph, pw):
        return _maxpool_forward_nb(_contig(x), ph, pw)

    def maxpool_backward(dout, arg, in_shape, ph, pw):
        return _maxpool_backward_nb(_contig(dout), np.ascontiguousarray(arg),
                                    tuple(in_shape), ph, pw)
else:
    conv2d_forward = _conv2d_forward_np
    conv2d_backward = _conv2d_backward_np
    maxpool_forward = _maxpool_forward_np
    maxpool_backward = _maxpool_backward_np
