"""Immutable dense float64 tensor in row-major (row, col, channel) order."""

import operator
from functools import reduce as _fold

import numpy as np

from .errors import ShapeError


class Tensor:
    """Dense grid of float64 values.

    Grids are stored as ``rows x cols x channels`` and series as
    ``length x channels``.  The backing array is read-only; ``set`` returns
    a new tensor.  ``np.asarray(t)`` gives the (read-only) shaped array.
    """

    __slots__ = ("_a",)

    def __init__(self, values, shape=None):
        a = np.array(values, dtype=np.float64, copy=True)
        if shape is not None:
            shape = _check_shape(shape)
            if a.size != _fold(operator.mul, shape, 1):
                raise ShapeError(f"{a.size} values do not fill shape {list(shape)}")
            a = a.reshape(shape)
        if a.ndim == 0:
            a = a.reshape(1)
        _check_shape(a.shape)
        a.flags.writeable = False
        self._a = a

    @property
    def shape(self):
        return list(self._a.shape)

    @property
    def data(self):
        """Flat row-major copy of the values."""
        return self._a.ravel().copy()

    @property
    def array(self):
        return self._a

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a
        return self._a.astype(dtype)

    def __len__(self):
        return self._a.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self._a.shape == other._a.shape and np.array_equal(self._a, other._a)

    __hash__ = None

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def _index(self, idx):
        idx = tuple(int(i) for i in idx)
        if len(idx) != self._a.ndim:
            raise IndexError(f"index {idx} has wrong rank for shape {self.shape}")
        for i, n in zip(idx, self._a.shape):
            if not 0 <= i < n:
                raise IndexError(f"index {idx} out of range for shape {self.shape}")
        return idx

    def get(self, idx):
        return float(self._a[self._index(idx)])

    def set(self, idx, value):
        idx = self._index(idx)
        a = self._a.copy()
        a[idx] = value
        return Tensor(a)

    def map(self, f):
        return elementwise_map(self, f)

    def reduce(self, op):
        return reduce(self, op)


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got {list(shape)}")
    return shape


def zeros(shape):
    return Tensor(np.zeros(_check_shape(shape)))


def get(t, idx):
    return t.get(idx)


def set(t, idx, value):  # noqa: A001 - mirrors get()
    return t.set(idx, value)


def elementwise_map(t, f):
    """Apply scalar ``f`` to every entry; numpy ufuncs are applied directly."""
    a = np.asarray(t)
    if isinstance(f, np.ufunc):
        return Tensor(f(a))
    out = np.fromiter((f(v) for v in a.ravel()), dtype=np.float64, count=a.size)
    return Tensor(out.reshape(a.shape))


def reduce(t, op):
    a = np.asarray(t)
    if op == "sum":
        return float(a.sum())
    if op == "max":
        return float(a.max())
    if op == "mean":
        return float(a.mean())
    raise ValueError(f"unknown reduction {op!r}")
