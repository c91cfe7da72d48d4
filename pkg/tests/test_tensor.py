import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridforge import tensor as T
from gridforge.errors import ShapeError


def test_zeros():
    t = T.zeros([2, 2, 1])
    assert t.shape == [2, 2, 1]
    assert list(t.data) == [0.0] * 4
    assert list(T.zeros([1]).data) == [0.0]
    with pytest.raises(ShapeError):
        T.zeros([3, 0, 1])
    with pytest.raises(ShapeError):
        T.zeros([-1])


def test_get_set():
    t = T.set(T.zeros([2, 2]), (0, 1), 5.0)
    assert T.get(t, (0, 1)) == 5.0
    assert T.get(T.zeros([2, 2]), (0, 0)) == 0.0
    with pytest.raises(IndexError):
        T.get(T.zeros([2, 2]), (2, 0))
    with pytest.raises(IndexError):
        T.get(T.zeros([2, 2]), (0,))


def test_set_does_not_mutate():
    t = T.zeros([3])
    t2 = t.set((1,), 2.0)
    assert t.get((1,)) == 0.0 and t2.get((1,)) == 2.0
    with pytest.raises(ValueError):
        np.asarray(t)[0] = 1.0


def test_map_and_reduce():
    assert list(T.elementwise_map(T.Tensor([1, -2, 3]), abs).data) == [1, 2, 3]
    assert T.reduce(T.Tensor([1, 2, 3]), "sum") == 6
    assert T.reduce(T.Tensor([[1, 5], [2, 4]]), "max") == 5
    assert T.reduce(T.Tensor([[1, 5], [2, 4]]), "mean") == 3
    with pytest.raises(ValueError):
        T.reduce(T.Tensor([1]), "median")


def test_row_major_layout():
    t = T.Tensor(np.arange(12.0), shape=[2, 3, 2])
    assert t.get((1, 0, 1)) == 1 * 6 + 0 * 2 + 1


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4)


@given(shapes, st.data(), st.floats(-1e6, 1e6))
def test_set_get_roundtrip(shape, data, value):
    idx = tuple(data.draw(st.integers(0, n - 1)) for n in shape)
    t = T.zeros(shape).set(idx, value)
    assert t.get(idx) == value
    assert T.reduce(t, "sum") == value


@given(shapes, st.integers(0, 2**32 - 1))
def test_map_identity_and_linearity(shape, seed):
    a = np.random.default_rng(seed).normal(size=shape)
    t = T.Tensor(a)
    ident = T.elementwise_map(t, lambda v: v)
    assert np.asarray(ident).tobytes() == np.asarray(t).tobytes()
    doubled = T.reduce(T.elementwise_map(t, lambda v: 2 * v), "sum")
    base = T.reduce(t, "sum")
    assert abs(doubled - 2 * base) <= 1e-12 * max(1.0, abs(2 * base))
