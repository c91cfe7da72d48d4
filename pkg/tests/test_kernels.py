"""Both kernel backends against each other and against direct summation."""

import numpy as np
import pytest

from gridforge import kernels as K
from gridforge._accel import HAVE_NUMBA

import oracles

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend unavailable")


@pytest.fixture(params=range(6))
def conv_case(request):
    rng = np.random.default_rng(request.param)
    n, h, w, c, f = 2, int(rng.integers(4, 9)), int(rng.integers(4, 9)), int(rng.integers(1, 4)), 3
    kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    return (rng.normal(size=(n, h, w, c)), rng.normal(size=(f, kh, kw, c)),
            rng.normal(size=f), rng.normal(size=(n, h - kh + 1, w - kw + 1, f)))


def test_conv_forward_backends_agree(conv_case):
    x, k, b, _ = conv_case
    a = K._conv2d_forward_nb(x, k, b)
    c = K._conv2d_forward_np(x, k, b)
    np.testing.assert_allclose(a, c, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a[1], oracles.conv2d(x[1], k, b), rtol=0, atol=1e-12)


def test_conv_backward_backends_agree(conv_case):
    x, k, _, g = conv_case
    for nb, np_ in zip(K._conv2d_backward_nb(x, k, g, True), K._conv2d_backward_np(x, k, g, True)):
        np.testing.assert_allclose(nb, np_, rtol=0, atol=1e-11)


def test_conv_backward_is_adjoint(conv_case):
    # <dout, conv(x)> is linear in x and k: its gradients are what backward returns
    x, k, b, g = conv_case
    dk, db, dx = K._conv2d_backward_np(x, k, g, True)
    zero = np.zeros_like(b)
    lhs = np.sum(g * K._conv2d_forward_np(x, k, zero))
    assert abs(lhs - np.sum(dk * k)) < 1e-9
    assert abs(lhs - np.sum(dx * x)) < 1e-9
    np.testing.assert_allclose(db, g.sum(axis=(0, 1, 2)))


@pytest.mark.parametrize("seed", range(5))
def test_maxpool_backends_agree(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 7, 9, 3))
    x[0, 0, 0, 0] = x[0, 0, 1, 0]  # a tie: both must route to the first maximiser
    for ph, pw in [(2, 2), (1, 2), (3, 2)]:
        o1, a1 = K._maxpool_forward_nb(x, ph, pw)
        o2, a2 = K._maxpool_forward_np(x, ph, pw)
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(o1[1], oracles.pool2d(x[1], ph, pw, "max"))
        g = rng.normal(size=o1.shape)
        np.testing.assert_array_equal(K._maxpool_backward_nb(g, a1, x.shape, ph, pw),
                                      K._maxpool_backward_np(g, a2, x.shape, ph, pw))


def test_maxpool_tie_goes_to_first():
    x = np.ones((1, 2, 2, 1))
    _, arg = K._maxpool_forward_np(x, 2, 2)
    assert arg[0, 0, 0, 0] == 0
    _, arg = K._maxpool_forward_nb(x, 2, 2)
    assert arg[0, 0, 0, 0] == 0


def test_avgpool_matches_oracle():
    x = np.random.default_rng(2).normal(size=(1, 8, 6, 2))
    np.testing.assert_allclose(K.avgpool_forward(x, 2, 3)[0], oracles.pool2d(x[0], 2, 3, "avg"),
                               rtol=0, atol=1e-12)
