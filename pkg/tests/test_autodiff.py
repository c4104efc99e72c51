"""Engine-level checks: op gradients, broadcasting, graph mechanics."""

import numpy as np
import pytest

import wdci.autodiff as ad
from gradcheck import check_input_grad, numerical_grad, rel_error


def make_x(shape=(2, 3, 4, 5), seed=0):
    rng = np.random.default_rng(seed)
    return ad.Tensor(rng.standard_normal(shape), requires_grad=True)


@pytest.mark.parametrize(
    "expr",
    [
        lambda x: x * 3.0 + 1.5,
        lambda x: x * x - x,
        lambda x: x / (x * x + 2.0),
        lambda x: ad.exp(x * 0.3),
        lambda x: ad.sqrt(x * x + 1.0),
        lambda x: ad.sigmoid(x),
        lambda x: ad.relu(x),
        lambda x: ad.leaky_relu(x, 0.2),
        lambda x: ad.absolute(x + 0.31),
        lambda x: ad.softmax(x, axis=1),
        lambda x: x**3,
    ],
)
def test_elementwise_grads(expr):
    x = make_x()
    err = check_input_grad(lambda: ad.mean(expr(x) * np.cos(np.arange(120).reshape(2, 3, 4, 5))), x)
    assert err < 1e-3


def test_broadcast_add_mul_grads():
    rng = np.random.default_rng(1)
    a = ad.Tensor(rng.standard_normal((2, 3, 1, 5)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((1, 3, 4, 1)), requires_grad=True)

    def f():
        return ad.sum_(a * b + a)

    out = f()
    out.backward()
    ga, gb = a.grad.copy(), b.grad.copy()
    assert rel_error(ga, numerical_grad(lambda: float(f().data), a.data)) < 1e-3
    assert rel_error(gb, numerical_grad(lambda: float(f().data), b.data)) < 1e-3


def test_matmul_transpose_reshape_concat_grads():
    rng = np.random.default_rng(2)
    a = ad.Tensor(rng.standard_normal((3, 4, 5)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((3, 5, 2)), requires_grad=True)

    def f():
        y = ad.matmul(a, b)
        y = ad.transpose(y, (1, 0, 2))
        y = ad.reshape(y, (4, 6))
        z = ad.concat([y, y * 2.0], axis=1)
        return ad.sum_(z * z)

    f().backward()
    ga = a.grad.copy()
    assert rel_error(ga, numerical_grad(lambda: float(f().data), a.data)) < 1e-3


def test_chunk_and_narrow():
    x = make_x((2, 6, 3, 3))
    parts = ad.chunk(x, 3, axis=1)
    assert [p.shape[1] for p in parts] == [2, 2, 2]
    out = ad.sum_(parts[0] * parts[2])
    out.backward()
    assert np.allclose(x.grad[:, 2:4], 0.0)
    with pytest.raises(ad.ShapeError):
        ad.chunk(x, 4, axis=1)


def test_sum_mean_axis_grads():
    x = make_x((3, 4, 2, 2), seed=3)

    def f():
        return ad.sum_(ad.mean(x, axis=(2, 3), keepdims=True) ** 2)

    f().backward()
    assert rel_error(x.grad, numerical_grad(lambda: float(f().data), x.data)) < 1e-3


def test_conv2d_grads_dense_and_grouped():
    rng = np.random.default_rng(4)
    x = ad.Tensor(rng.standard_normal((2, 4, 6, 6)), requires_grad=True)
    w = ad.Tensor(rng.standard_normal((6, 4, 3, 3)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal(6), requires_grad=True)

    def f():
        return ad.sum_(ad.conv2d(x, w, b, pad=1) ** 2)

    f().backward()
    for t in (x, w, b):
        assert rel_error(t.grad, numerical_grad(lambda: float(f().data), t.data)) < 1e-3

    xd = ad.Tensor(rng.standard_normal((1, 4, 5, 5)), requires_grad=True)
    wd = ad.Tensor(rng.standard_normal((4, 1, 3, 3)), requires_grad=True)

    def fd():
        return ad.sum_(ad.conv2d(xd, wd, None, pad=1, groups=4) ** 2)

    fd().backward()
    for t in (xd, wd):
        assert rel_error(t.grad, numerical_grad(lambda: float(fd().data), t.data)) < 1e-3


def test_maxpool_grad():
    x = make_x((1, 2, 4, 6), seed=5)

    def f():
        return ad.sum_(ad.maxpool2x2(x) ** 2)

    f().backward()
    assert rel_error(x.grad, numerical_grad(lambda: float(f().data), x.data, h=1e-5)) < 1e-3


def test_pixel_unshuffle_values_and_grad():
    x = ad.Tensor(np.arange(16.0).reshape(1, 1, 4, 4), requires_grad=True)
    y = ad.pixel_unshuffle(x, 2)
    assert y.shape == (1, 4, 2, 2)
    # channel order is (block row, block col) within each source channel
    assert np.allclose(y.data[0, :, 0, 0], [0, 1, 4, 5])
    ad.sum_(y * np.arange(16.0).reshape(1, 4, 2, 2)).backward()
    assert x.grad.shape == x.data.shape
    # permutation: gradient is the same multiset of weights
    assert sorted(x.grad.ravel()) == sorted(np.arange(16.0))


def test_no_grad_blocks_graph():
    x = make_x()
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert y._backward is None


def test_float32_preserved_through_ops():
    x = ad.Tensor(np.ones((2, 3, 4, 4), dtype=np.float32), requires_grad=True)
    y = ad.softmax(x * 2.0 - 0.5, axis=1)
    y = ad.mean(ad.sqrt(y + 1.0))
    assert y.data.dtype == np.float32


def test_grad_accumulates_across_uses():
    x = ad.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    y = ad.sum_(x * x + x * 4.0)
    y.backward()
    assert np.allclose(x.grad, 2 * x.data + 4.0)
