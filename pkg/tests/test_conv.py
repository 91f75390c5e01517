import itertools

import numpy as np
import pytest

from oracles import conv1d_direct, conv2d_direct, conv_transpose1d_direct
from tfgan import tensor as T
from tfgan.conv import conv1d, conv2d, conv_transpose1d
from tfgan.gradcheck import grad_check
from tfgan.tensor import Tensor


def test_identity_kernel():
    x = Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    w = Tensor(np.ones((1, 1, 1)))
    np.testing.assert_array_equal(conv1d(x, w).data, [[[1, 2, 3]]])


def test_adjacent_sums():
    x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
    np.testing.assert_array_equal(conv1d(x, Tensor(np.ones((1, 1, 2)))).data, [[[3, 5, 7]]])


def test_dilated_against_direct_summation(rng):
    x, w = rng.normal(size=(1, 2, 16)), rng.normal(size=(3, 2, 3))
    out = conv1d(Tensor(x), Tensor(w), dilation=3).data
    assert np.max(np.abs(out - conv1d_direct(x, w, dilation=3))) <= 1e-12


@pytest.mark.parametrize("stride, dilation, padding", list(itertools.product([1, 2, 3], repeat=3)))
def test_conv1d_oracle_grid(stride, dilation, padding, rng):
    for K in range(1, 6):
        T_len = dilation * (K - 1) + 1 + int(rng.integers(0, 6))
        x = rng.normal(size=(2, 3, T_len))
        w = rng.normal(size=(2, 3, K))
        b = rng.normal(size=2)
        got = conv1d(Tensor(x), Tensor(w), Tensor(b), stride=stride, dilation=dilation, padding=padding).data
        ref = conv1d_direct(x, w, b, stride, dilation, padding)
        assert got.shape == ref.shape
        assert np.max(np.abs(got - ref)) <= 1e-12


def test_grouped_conv_oracle(rng):
    x, w = rng.normal(size=(2, 8, 20)), rng.normal(size=(12, 2, 5))
    got = conv1d(Tensor(x), Tensor(w), stride=2, padding=2, groups=4).data
    assert np.max(np.abs(got - conv1d_direct(x, w, None, 2, 1, 2, groups=4))) <= 1e-12


def test_conv1d_too_short():
    with pytest.raises(ValueError, match="shorter than the kernel span"):
        conv1d(Tensor(np.ones((1, 1, 3))), Tensor(np.ones((1, 1, 3))), dilation=2)


def test_conv1d_channel_mismatch():
    with pytest.raises(ValueError, match="input channels"):
        conv1d(Tensor(np.ones((1, 2, 8))), Tensor(np.ones((1, 3, 3))))


def test_transpose_single_tap():
    out = conv_transpose1d(Tensor(np.ones((1, 1, 1))), Tensor(np.ones((1, 1, 2))), stride=1)
    np.testing.assert_array_equal(out.data, [[[1, 1]]])


def test_transpose_length_formula():
    x = Tensor(np.array([[[1.0, 0.0, 1.0]]]))
    out = conv_transpose1d(x, Tensor(np.ones((1, 1, 4))), stride=2)
    assert out.shape[-1] == (3 - 1) * 2 + 4 == 8


def test_transpose_matches_direct(rng):
    x, w = rng.normal(size=(2, 3, 5)), rng.normal(size=(3, 4, 6))
    got = conv_transpose1d(Tensor(x), Tensor(w), stride=3).data
    assert np.max(np.abs(got - conv_transpose1d_direct(x, w, 3))) <= 1e-12


def test_transpose_rejects_kernel_below_stride():
    with pytest.raises(ValueError):
        conv_transpose1d(Tensor(np.ones((1, 1, 3))), Tensor(np.ones((1, 1, 2))), stride=3)


def test_adjointness(rng):
    for _ in range(100):
        s = int(rng.integers(1, 4))
        K = int(rng.integers(s, 6))
        t_out = int(rng.integers(1, 6))
        T_len = (t_out - 1) * s + K
        cin, cout = rng.integers(1, 4, size=2)
        a = rng.normal(size=(2, cin, T_len))
        w = rng.normal(size=(cout, cin, K))
        b = rng.normal(size=(2, cout, t_out))
        lhs = np.sum(conv1d(Tensor(a), Tensor(w), stride=s).data * b)
        rhs = np.sum(a * conv_transpose1d(Tensor(b), Tensor(w), stride=s).data)
        assert abs(lhs - rhs) <= 1e-10


def test_conv2d_oracle(rng):
    x, w = rng.normal(size=(2, 3, 9, 7)), rng.normal(size=(4, 3, 3, 3))
    for stride, pad in [(1, 0), (1, 1), (2, 1), (2, 3)]:
        got = conv2d(Tensor(x), Tensor(w), stride=stride, padding=pad).data
        assert np.max(np.abs(got - conv2d_direct(x, w, stride, pad))) <= 1e-12


@pytest.mark.parametrize("stride, dilation, padding, groups", [(1, 1, 0, 1), (2, 3, 2, 1), (3, 2, 1, 2)])
def test_conv1d_grad_check(stride, dilation, padding, groups, rng):
    w = rng.normal(size=(4, 4 // groups, 3))
    x = rng.normal(size=(2, 4, 13))
    b = rng.normal(size=4)
    kw = dict(stride=stride, dilation=dilation, padding=padding, groups=groups)
    assert grad_check(lambda t: T.mean(T.leaky_relu(conv1d(t, Tensor(w), Tensor(b), **kw))), x).passed
    assert grad_check(lambda t: T.mean(T.square(conv1d(Tensor(x), t, Tensor(b), **kw))), w).passed
    assert grad_check(lambda t: T.mean(T.square(conv1d(Tensor(x), Tensor(w), t, **kw))), b).passed


def test_conv_transpose_grad_check(rng):
    x, w, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 2, 4)), rng.normal(size=2)
    assert grad_check(lambda t: T.sum(T.sin(conv_transpose1d(t, Tensor(w), Tensor(b), stride=2))), x).passed
    assert grad_check(lambda t: T.sum(T.sin(conv_transpose1d(Tensor(x), t, Tensor(b), stride=2))), w).passed
    assert grad_check(lambda t: T.sum(T.sin(conv_transpose1d(Tensor(x), Tensor(w), t, stride=2))), b).passed


def test_conv2d_grad_check(rng):
    x, w, b = rng.normal(size=(1, 2, 6, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    assert grad_check(lambda t: T.mean(T.tanh(conv2d(t, Tensor(w), Tensor(b), stride=2, padding=1))), x).passed
    assert grad_check(lambda t: T.mean(T.tanh(conv2d(Tensor(x), t, Tensor(b), stride=2, padding=1))), w).passed
