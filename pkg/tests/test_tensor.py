import numpy as np
import pytest

from acevc.nn import Tensor, concat, log_softmax, softmax, stack

from oracles import finite_difference


def scalar_of(expr_builder, arrays):
    """Evaluate expr_builder over Tensor-wrapped copies; return float loss."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    return expr_builder(*tensors)


def check_grads(expr_builder, *shapes, seed=0):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = expr_builder(*tensors)
    loss.backward()
    for arr, tensor in zip(arrays, tensors):
        numeric = finite_difference(
            lambda: float(expr_builder(*[Tensor(a) for a in arrays]).data), arr)
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(arr)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_add_mul_broadcast_grads():
    check_grads(lambda a, b: ((a + b) * a).sum(), (3, 4), (4,))


def test_sub_div_grads():
    check_grads(lambda a, b: (a / (b * b + 2.0) - b).sum(), (5,), (5,))


def test_matmul_2d_grads():
    check_grads(lambda a, b: (a @ b).sum(), (3, 4), (4, 2))


def test_matmul_batched_grads():
    check_grads(lambda a, b: ((a @ b) * (a @ b)).sum(), (2, 3, 4), (2, 4, 3))


def test_getitem_slice_and_advanced():
    check_grads(lambda a: (a[0:2] * 3.0).sum(), (4, 3))
    idx = np.array([0, 2, 2])
    check_grads(lambda a: a[idx].sum(), (4,))


def test_reshape_transpose_grads():
    check_grads(lambda a: (a.reshape(6, 2).transpose(1, 0) ** 2).sum(), (3, 4))


def test_reductions_and_unary():
    check_grads(lambda a: (a.exp() + (a * a + 1.0).log()).mean(), (3, 3))
    check_grads(lambda a: (a * a + 0.5).sqrt().sum(), (4,))
    check_grads(lambda a: a.tanh().sum(), (4,))
    check_grads(lambda a: a.gelu().sum(), (7,))
    check_grads(lambda a: a.relu().sum(), (7,))
    check_grads(lambda a: a.mean(axis=1).sum(), (3, 5))
    check_grads(lambda a: a.sum(axis=0, keepdims=True).sum(), (3, 5))


def test_softmax_and_log_softmax_grads():
    check_grads(lambda a: (softmax(a, axis=-1) * np.arange(4.0)).sum(), (3, 4))
    check_grads(lambda a: log_softmax(a, axis=-1)[1, 2] * 2.0, (3, 4))


def test_softmax_rows_normalize():
    x = Tensor(np.random.default_rng(0).normal(size=(5, 7)))
    rows = softmax(x).data.sum(axis=1)
    np.testing.assert_allclose(rows, 1.0, atol=1e-12)
    logp = log_softmax(x).data
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-12)


def test_concat_stack_grads():
    check_grads(lambda a, b: (concat([a, b], axis=0) ** 2).sum(), (2, 3), (4, 3))
    check_grads(lambda a, b: (stack([a, b]) * 2.0).sum(), (3,), (3,))


def test_grad_accumulates_over_reuse():
    a = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    loss = (a * a).sum() + a.sum()
    loss.backward()
    np.testing.assert_allclose(a.grad, [5.0, 7.0])


def test_backward_requires_scalar():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (a * 2).backward()


def test_no_grad_tracking_for_constants():
    a = Tensor(np.ones(3))
    out = a * 2.0 + 1.0
    assert not out.requires_grad


def test_dtype_preserved_float32():
    a = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    out = ((a * 2.0 + 1.0).exp()).sum()
    assert out.dtype == np.float32
    out.backward()
    assert a.grad.dtype == np.float32
