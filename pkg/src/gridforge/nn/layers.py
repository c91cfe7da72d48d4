"""Forward and backward passes.

Single-sample helpers (``conv2d_forward``, ``pool`` ...) take and return
:class:`~gridforge.tensor.Tensor` values.  The network routines work on
batched arrays with a leading sample axis and are what training uses.
"""

import numpy as np

from .. import kernels as _kern
from ..errors import NumericError, ShapeError
from ..tensor import Tensor
from .spec import (Activation, AvgPool, Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool,
                   Softmax, pool_window)

CE_EPS = 1e-12


# -- elementwise -------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(z, a, kind, g):
    if kind == "relu":
        return np.where(z > 0, g, 0.0)  # subgradient 0 at z == 0
    if kind == "sigmoid":
        return g * a * (1.0 - a)
    return g * (1.0 - a * a)


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# -- padding -----------------------------------------------------------------

def _pads(k, pad):
    if pad == "valid":
        return 0, 0
    before = (k - 1) // 2
    return before, k - 1 - before


def _pad2d(x, kh, kw, pad):
    (t, b), (l, r) = _pads(kh, pad), _pads(kw, pad)
    if t == b == l == r == 0:
        return x, (0, 0, 0, 0)
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0))), (t, b, l, r)


def _unpad2d(dx, pads):
    t, b, l, r = pads
    h, w = dx.shape[1], dx.shape[2]
    return dx[:, t:h - b, l:w - r, :]


# -- single-sample public operations -----------------------------------------

def conv2d_forward(input, kernels, bias, zero_pad=False):  # noqa: A002
    """Stride-1 convolution of an ``h x w x c`` input.

    ``kernels`` is ``filters x kh x kw x c``.  ``zero_pad`` keeps the
    spatial size ("same"), otherwise it shrinks by ``k - 1`` ("valid").
    """
    x = np.asarray(input, dtype=np.float64)
    k = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 3 or k.ndim != 4:
        raise ShapeError(f"conv2d expects h x w x c input and 4D kernels, got {x.shape}, {k.shape}")
    if k.shape[3] != x.shape[2]:
        raise ShapeError(f"kernel channels {k.shape[3]} != input channels {x.shape[2]}")
    xp, _ = _pad2d(x[None], k.shape[1], k.shape[2], "same" if zero_pad else "valid")
    if k.shape[1] > xp.shape[1] or k.shape[2] > xp.shape[2]:
        raise ShapeError("kernel larger than (padded) input")
    return Tensor(_kern.conv2d_forward(xp, k, np.asarray(bias, dtype=np.float64))[0])


def conv1d_forward(input, kernels, bias, zero_pad=False):  # noqa: A002
    """1D analogue of :func:`conv2d_forward`: ``n x c`` input, ``filters x k x c`` kernels."""
    x = np.asarray(input, dtype=np.float64)
    k = np.asarray(kernels, dtype=np.float64)
    if x.ndim != 2 or k.ndim != 3:
        raise ShapeError(f"conv1d expects n x c input and 3D kernels, got {x.shape}, {k.shape}")
    out = conv2d_forward(x[None], k[:, None], bias, zero_pad)
    return Tensor(np.asarray(out)[0])


def activate(x, kind):
    return Tensor(_activate(np.asarray(x, dtype=np.float64), kind))


def pool(x, window, kind="max"):
    """Non-overlapping max/avg pooling of a grid (``h x w x c``) or series (``n x c``)."""
    a = np.asarray(x, dtype=np.float64)
    layer = MaxPool(window) if kind == "max" else AvgPool(window)
    ph, pw = pool_window(layer, a.ndim)
    b = a[None] if a.ndim == 3 else a[None, None]
    if kind == "max":
        out, _ = _kern.maxpool_forward(b, ph, pw)
    elif kind == "avg":
        out = _kern.avgpool_forward(b, ph, pw)
    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    return Tensor(out[0] if a.ndim == 3 else out[0, 0])


def conv_block(V, kernels, bias, activation="relu", window=(2, 2), pool_kind="max", zero_pad=False):
    """pool(activate(conv(V)))."""
    conv = conv2d_forward if np.ndim(V) == 3 else conv1d_forward
    return pool(activate(conv(V, kernels, bias, zero_pad), activation), window, pool_kind)


def flatten(P):
    return Tensor(np.asarray(P).ravel())


def dense_forward(v, W, b):
    """Affine map ``W @ v + b`` with ``W`` shaped ``units x inputs``."""
    return Tensor(np.asarray(W) @ np.asarray(v).ravel() + np.asarray(b))


def softmax(v):
    return Tensor(_softmax(np.asarray(v, dtype=np.float64)))


def dropout(v, rate, seed=0, training=False):
    """Inverted dropout: zero with probability ``rate`` and rescale survivors."""
    a = np.asarray(v, dtype=np.float64)
    if not training or rate == 0.0:
        return Tensor(a)
    keep = np.random.default_rng(seed).random(a.shape) >= rate
    return Tensor(np.where(keep, a / (1.0 - rate), 0.0))


def loss(pred, target, kind="sse"):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    if kind == "sse":
        return float(np.sum((p - t) ** 2))
    if kind == "cross_entropy":
        return float(-np.sum(t * np.log(p + CE_EPS)))
    raise ValueError(f"unknown loss {kind!r}")


# -- batched network passes --------------------------------------------------

def _batch_loss(out, y, kind):
    """Per-sample losses and their gradient w.r.t. ``out``."""
    flat_out = out.reshape(out.shape[0], -1)
    flat_y = y.reshape(y.shape[0], -1)
    if kind == "sse":
        diff = flat_out - flat_y
        return np.sum(diff * diff, axis=1), 2.0 * diff
    p = flat_out + CE_EPS
    return -np.sum(flat_y * np.log(p), axis=1), -flat_y / p


def forward(spec, params, x, training=False, rng=None, stop=None, keep=False):
    """Run the network on a batch ``x`` (samples first).

    ``stop`` ends the pass after layer ``stop - 1``.  With ``keep`` the
    per-layer caches needed by :func:`backward_batch` are returned too.
    Dropout is active only when ``training`` (and then needs ``rng``).
    """
    a = np.asarray(x, dtype=np.float64)
    stop = len(spec.layers) if stop is None else stop
    caches = []
    for i, layer in enumerate(spec.layers[:stop]):
        cache = None
        if isinstance(layer, (Conv2D, Conv1D)):
            p = params[i]
            k = p["W"] if isinstance(layer, Conv2D) else p["W"][:, None]
            a4 = a if isinstance(layer, Conv2D) else a[:, None]
            xp, pads = _pad2d(a4, k.shape[1], k.shape[2], layer.pad)
            out = _kern.conv2d_forward(xp, k, p["b"])
            cache = (xp, pads, k)
            a = out if isinstance(layer, Conv2D) else out[:, 0]
        elif isinstance(layer, Activation):
            z = a
            a = _activate(z, layer.kind)
            cache = (z, a)
        elif isinstance(layer, (MaxPool, AvgPool)):
            rank = a.ndim - 1
            ph, pw = pool_window(layer, rank)
            a4 = a if rank == 3 else a[:, None]
            if isinstance(layer, MaxPool):
                out, arg = _kern.maxpool_forward(a4, ph, pw)
            else:
                out, arg = _kern.avgpool_forward(a4, ph, pw), None
            cache = (a4.shape, arg, ph, pw)
            a = out if rank == 3 else out[:, 0]
        elif isinstance(layer, Flatten):
            cache = a.shape
            a = a.reshape(a.shape[0], -1)
        elif isinstance(layer, Dense):
            cache = a
            a = a @ params[i]["W"].T + params[i]["b"]
        elif isinstance(layer, Dropout):
            if training and layer.rate > 0.0:
                mask = (rng.random(a.shape) >= layer.rate) / (1.0 - layer.rate)
                a = a * mask
                cache = mask
        elif isinstance(layer, Softmax):
            a = _softmax(a)
            cache = a
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite output at layer {i} ({layer.type})", layer=i)
        caches.append(cache)
    return (a, caches) if keep else a


def backward_batch(spec, params, x, y, training=False, rng=None):
    """Per-sample losses and the gradient of their *sum* w.r.t. every parameter."""
    out, caches = forward(spec, params, x, training=training, rng=rng, keep=True)
    losses, g = _batch_loss(out, np.asarray(y, dtype=np.float64), spec.loss)
    g = g.reshape(out.shape)
    grads = [None] * len(spec.layers)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, cache = spec.layers[i], caches[i]
        if isinstance(layer, (Conv2D, Conv1D)):
            xp, pads, k = cache
            g4 = g if isinstance(layer, Conv2D) else g[:, None]
            dk, db, dxp = _kern.conv2d_backward(xp, k, g4, i > 0)
            if isinstance(layer, Conv1D):
                dk = dk[:, 0]
            grads[i] = {"W": dk, "b": db}
            if i > 0:
                dx = _unpad2d(dxp, pads)
                g = dx if isinstance(layer, Conv2D) else dx[:, 0]
        elif isinstance(layer, Activation):
            z, a = cache
            g = _activate_grad(z, a, layer.kind, g)
        elif isinstance(layer, (MaxPool, AvgPool)):
            in_shape, arg, ph, pw = cache
            rank3 = g.ndim == 4
            g4 = g if rank3 else g[:, None]
            if isinstance(layer, MaxPool):
                dx = _kern.maxpool_backward(g4, arg, in_shape, ph, pw)
            else:
                dx = _kern.avgpool_backward(g4, in_shape, ph, pw)
            g = dx if rank3 else dx[:, 0]
        elif isinstance(layer, Flatten):
            g = g.reshape(cache)
        elif isinstance(layer, Dense):
            grads[i] = {"W": g.T @ cache, "b": g.sum(axis=0)}
            g = g @ params[i]["W"]
        elif isinstance(layer, Dropout):
            if cache is not None:
                g = g * cache
        elif isinstance(layer, Softmax):
            p = cache
            g = p * (g - np.sum(g * p, axis=-1, keepdims=True))
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at layer {i} ({layer.type})", layer=i)
    return losses, grads


def backward(spec, params, input, target):  # noqa: A002
    """Exact gradient of one sample's loss w.r.t. every parameter (inference mode)."""
    x = np.asarray(input, dtype=np.float64)[None]
    y = np.asarray(target, dtype=np.float64).reshape(1, -1)
    _, grads = backward_batch(spec, params, x, y)
    return grads
