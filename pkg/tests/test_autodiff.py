"""Finite-difference checks for every autodiff primitive."""

import numpy as np
import pytest

from covcast import autodiff as ad


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at x."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def check_op(build, shapes, seed=0, atol=1e-7, rtol=1e-5):
    """Compare analytic and numeric gradients of sum(build(*tensors))."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    loss = ad.tsum(out)
    loss.backward()
    for k, (arr, tensor) in enumerate(zip(arrays, tensors)):
        def scalar_fn(x, k=k):
            args = [ad.Tensor(a) for a in arrays]
            args[k] = ad.Tensor(x)
            return float(ad.tsum(build(*args)).data)

        expected = numeric_grad(scalar_fn, arr.copy())
        np.testing.assert_allclose(tensor.grad, expected, atol=atol, rtol=rtol)


def test_add_broadcast():
    check_op(lambda a, b: ad.add(a, b), [(3, 4), (4,)])


def test_mul_broadcast():
    check_op(lambda a, b: ad.mul(a, b), [(2, 3, 4), (3, 1)])


def test_div():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.uniform(1.0, 2.0, size=(4,))
    ta = ad.Tensor(a, requires_grad=True)
    tb = ad.Tensor(b, requires_grad=True)
    ad.tsum(ad.div(ta, tb)).backward()
    np.testing.assert_allclose(ta.grad, np.ones_like(a) / b, rtol=1e-12)
    np.testing.assert_allclose(tb.grad, (-a / b**2).sum(axis=0), rtol=1e-12)


def test_matmul():
    check_op(lambda a, b: ad.matmul(a, b), [(3, 4), (4, 5)])


def test_matmul_batched_broadcast():
    check_op(lambda a, b: ad.matmul(a, b), [(2, 6, 3, 4), (4, 5)])


def test_relu():
    check_op(ad.relu, [(5, 5)], seed=3)


def test_exp_sqrt():
    rng = np.random.default_rng(4)
    x = rng.uniform(0.5, 2.0, size=(4, 3))
    t = ad.Tensor(x.copy(), requires_grad=True)
    ad.tsum(ad.sqrt(ad.exp(t))).backward()
    expected = 0.5 * np.exp(x / 2)  # d/dx exp(x)^(1/2)
    np.testing.assert_allclose(t.grad, expected, rtol=1e-10)


def test_sum_axis_keepdims():
    check_op(lambda x: ad.tsum(x, axis=1, keepdims=True), [(3, 4, 2)])
    check_op(lambda x: ad.tsum(x, axis=(0, 2)), [(3, 4, 2)])


def test_mean():
    check_op(lambda x: ad.tmean(x, axis=-1), [(3, 5)])


def test_reshape_swapaxes_transpose():
    check_op(lambda x: ad.reshape(x, (4, 6)), [(2, 3, 4)])
    check_op(lambda x: ad.swapaxes(x, 0, 2), [(2, 3, 4)])
    check_op(lambda x: ad.transpose(x, (2, 0, 1)), [(2, 3, 4)])


def test_getitem_slice():
    check_op(lambda x: x[1:, :2], [(3, 4)])


def test_take_with_repeats():
    table = ad.Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    idx = np.array([0, 2, 2, 1])
    out = ad.take(table, idx)
    ad.tsum(ad.mul(out, out)).backward()
    expected = np.zeros((4, 3))
    for i in idx:
        expected[i] += 2 * table.data[i]
    np.testing.assert_allclose(table.grad, expected)


def test_concatenate():
    check_op(lambda a, b: ad.concatenate([a, b], axis=1), [(2, 3), (2, 2)])


def test_where_constant_condition():
    cond = np.array([[True, False], [False, True]])
    check_op(lambda a, b: ad.where(cond, a, b), [(2, 2), (2, 2)])


def test_softmax_grad():
    check_op(lambda x: ad.softmax(x, axis=-1), [(3, 5)], atol=1e-8)


def test_softmax_rows_sum_to_one():
    x = ad.Tensor(np.random.default_rng(0).normal(size=(4, 7)) * 30)
    s = ad.softmax(x, axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(4), rtol=1e-12)


def test_diamond_graph_accumulates_both_paths():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x
    y.backward()
    np.testing.assert_allclose(x.grad, [2 * 2.0 + 3.0])


def test_no_grad_blocks_graph():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, 2.0)
    assert not y.requires_grad
    assert y._parents == ()


def test_float32_stays_float32():
    x = ad.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    y = ((x - 1.0) * 2.0 + 0.5) * x
    assert y.dtype == np.float32
    ad.tsum(y).backward()
    assert x.grad.dtype == np.float32
