import numpy as np
import pytest

from hyperflux import autodiff as ad


def test_square_gradient_at_three():
    x = ad.parameter(np.array(3.0))
    y = ad.square(x)
    y.backward()
    assert abs(float(x.grad) - 6.0) < 1e-9
    err = ad.grad_check(lambda t: ad.square(t), [np.array(3.0)])
    assert err < 1e-6


def test_constant_function_has_zero_gradient():
    x = ad.parameter(np.array([1.0, 2.0]))
    y = ad.tsum(x * 0.0) + 5.0
    y.backward()
    assert np.allclose(x.grad, 0.0)


@pytest.mark.parametrize("op,shapes", [
    (lambda a, b: ad.tsum(ad.square(a + b)), [(3, 4), (3, 4)]),
    (lambda a, b: ad.tsum(ad.square(a + b)), [(3, 4), (4,)]),          # broadcast
    (lambda a, b: ad.tsum(ad.square(a * b)), [(2, 5), (2, 5)]),
    (lambda a, b: ad.tsum(ad.square(a * b)), [(2, 5), (5,)]),
    (lambda a, b: ad.tsum(ad.square(a @ b)), [(3, 4), (4, 2)]),
    (lambda a, b: ad.tsum(ad.square(a @ b)), [(2, 3, 4), (4, 2)]),     # stacked @ weight
    (lambda a, b: ad.tsum(ad.square(a @ b)), [(2, 3, 4), (2, 4, 2)]),  # batched
])
def test_binary_op_gradients(op, shapes):
    rng = np.random.default_rng(hash(str(shapes)) % 2 ** 31)
    pts = [rng.normal(size=s) for s in shapes]
    assert ad.grad_check(op, pts) < 1e-4


@pytest.mark.parametrize("fn", [
    ad.tanh, ad.sigmoid, ad.log_sigmoid, ad.exp, ad.cos, ad.square, ad.normal_cdf,
    lambda x: ad.softmax(x, axis=-1),
])
def test_unary_op_gradients(fn):
    rng = np.random.default_rng(0)
    for _ in range(3):
        pts = [rng.normal(size=(3, 4))]
        assert ad.grad_check(lambda t: ad.tsum(ad.square(fn(t))), pts) < 1e-4


def test_log_and_clip_gradients():
    rng = np.random.default_rng(1)
    pts = [rng.uniform(0.5, 2.0, size=(3, 3))]
    assert ad.grad_check(lambda t: ad.tsum(ad.log(t)), pts) < 1e-4
    # clip active on some entries: zero grad there
    x = ad.parameter(np.array([-1.0, 2.0]))
    y = ad.tsum(ad.clip_min(x, 0.5))
    y.backward()
    assert np.allclose(x.grad, [0.0, 1.0])


def test_reduction_and_shape_ops():
    rng = np.random.default_rng(2)
    pts = [rng.normal(size=(2, 3, 4))]
    assert ad.grad_check(lambda t: ad.tsum(ad.square(ad.tsum(t, axis=1))), pts) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(ad.square(ad.reshape(t, (6, 4)))), pts) < 1e-4
    assert ad.grad_check(
        lambda t: ad.tsum(ad.square(ad.transpose(t, (2, 0, 1)))), pts) < 1e-4
    assert ad.grad_check(
        lambda t: ad.tsum(ad.square(ad.broadcast_to(ad.tsum(t, axis=0, keepdims=True),
                                                    (5, 3, 4)))), pts) < 1e-4


def test_concat_slice_gather_scatter_segment():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 2))
    assert ad.grad_check(
        lambda x, y: ad.tsum(ad.square(ad.concat([x, y], axis=-1))), [a, b]) < 1e-4
    m = rng.normal(size=(5, 3))
    assert ad.grad_check(lambda x: ad.tsum(ad.square(ad.slice_rows(x, 1, 4))), [m]) < 1e-4
    idx = np.array([0, 2, 2, 4])
    assert ad.grad_check(lambda x: ad.tsum(ad.square(ad.gather_rows(x, idx))), [m]) < 1e-4
    rows = rng.normal(size=(2, 3))
    assert ad.grad_check(
        lambda x, r: ad.tsum(ad.square(ad.scatter_rows(x, np.array([1, 3]), r))),
        [m, rows]) < 1e-4
    seg = np.array([0, 0, 1, 2])
    assert ad.grad_check(
        lambda x: ad.tsum(ad.square(ad.segment_sum(ad.gather_rows(x, idx), seg, 3))),
        [m]) < 1e-4


def test_softmax_rows_are_distributions():
    rng = np.random.default_rng(4)
    y = ad.softmax(ad.constant(rng.normal(size=(6, 5)) * 3), axis=-1).value
    assert np.all(y >= 0)
    assert np.allclose(y.sum(axis=-1), 1.0)


def test_normal_cdf_values():
    x = ad.constant(np.array([0.0, 1.96, -1.96]))
    y = ad.normal_cdf(x).value
    assert abs(y[0] - 0.5) < 1e-12
    assert abs(y[1] - 0.975) < 1e-3
    assert abs(y[2] - 0.025) < 1e-3


def test_repeated_evaluation_is_bit_identical():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 4))

    def run():
        t = ad.constant(x)
        return ad.tsum(ad.softmax(ad.tanh(t @ t) * 2.0, axis=-1)).item()

    assert run() == run()


def test_backward_requires_scalar():
    x = ad.parameter(np.ones(3))
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_matmul_requires_2d():
    with pytest.raises(ValueError):
        ad.matmul(ad.constant(np.ones(3)), ad.constant(np.ones((3, 2))))
