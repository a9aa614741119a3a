import numpy as np
import pytest

from acevc.nn import (Conv1d, FeedForward, LayerNorm, Linear, Module,
                      MultiHeadSelfAttention, Tensor, custom_op, grad_check)


def mse_to_zero(out):
    return (out * out).mean()


def make_loss(batch):
    def loss_fn(model):
        x = Tensor(np.asarray(batch, dtype=model.dtype))
        return mse_to_zero(model(x))
    return loss_fn


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_linear_grad_check(rng):
    model = Linear(5, 3, "g", rng)
    report = grad_check(model, make_loss(rng.normal(size=(4, 5))), tolerance=1e-5)
    assert report.passed, str(report)


def test_conv1d_grad_check(rng):
    model = Conv1d(3, 4, kernel=3, group="g", rng=rng)
    report = grad_check(model, make_loss(rng.normal(size=(6, 3))), tolerance=1e-4)
    assert report.passed, str(report)


def test_conv1d_strided_grad_check(rng):
    model = Conv1d(2, 3, kernel=8, stride=4, padding=2, group="g", rng=rng)
    report = grad_check(model, make_loss(rng.normal(size=(11, 2))), tolerance=1e-4)
    assert report.passed, str(report)


def test_conv1d_subsample_length_contract(rng):
    conv = Conv1d(2, 3, kernel=8, stride=4, padding=2, group="g", rng=rng)
    for t in range(4, 40):
        out = conv(Tensor(np.zeros((t, 2), dtype=np.float32)))
        assert out.shape[0] == t // 4


def test_layernorm_grad_check(rng):
    model = LayerNorm(6, "g")
    report = grad_check(model, make_loss(rng.normal(size=(3, 6))), tolerance=1e-4)
    assert report.passed, str(report)


def test_attention_grad_check(rng):
    model = MultiHeadSelfAttention(8, heads=2, group="g", rng=rng)
    report = grad_check(model, make_loss(rng.normal(size=(5, 8))), tolerance=1e-4)
    assert report.passed, str(report)


def test_attention_cosine_loss_grad_check(rng):
    model = MultiHeadSelfAttention(8, heads=2, group="g", rng=rng)
    target = rng.normal(size=(5, 8))

    def loss_fn(model):
        out = model(Tensor(rng_data.astype(model.dtype)))
        tgt = np.asarray(target, dtype=model.dtype)
        dot = (out * tgt).sum()
        norm = ((out * out).sum() + 1e-8).sqrt()
        return 1.0 - dot / (norm * float(np.linalg.norm(target)))

    rng_data = rng.normal(size=(5, 8))
    report = grad_check(model, loss_fn, tolerance=1e-4)
    assert report.passed, str(report)


def test_feedforward_grad_check(rng):
    model = FeedForward(6, 2, "g", rng)
    report = grad_check(model, make_loss(rng.normal(size=(4, 6))), tolerance=1e-4)
    assert report.passed, str(report)


def test_zero_linear_zero_loss_zero_grads(rng):
    model = Linear(4, 2, "g", rng)
    model.weight.data[:] = 0.0
    model.zero_grad()
    loss = mse_to_zero(model(Tensor(np.zeros((3, 4), dtype=np.float32))))
    assert float(loss.data) == 0.0
    loss.backward()
    assert np.all(model.weight.grad == 0.0)
    assert np.all(model.bias.grad == 0.0)


def test_grad_check_catches_corrupted_backward(rng):
    class Corrupted(Module):
        def __init__(self):
            super().__init__()
            self.inner = Linear(3, 3, "g", rng)

        def __call__(self, x):
            y = self.inner(x)
            # deliberately wrong VJP: scales the incoming gradient
            return custom_op(y.data * 2.0, (y,), lambda g: (g * 3.0,))

    report = grad_check(Corrupted(), make_loss(rng.normal(size=(2, 3))),
                        tolerance=1e-4)
    assert not report.passed


def test_param_groups_and_state_dict(rng):
    class TwoGroup(Module):
        def __init__(self):
            super().__init__()
            self.backbone = Linear(3, 3, "backbone", rng)
            self.head = Linear(3, 2, "heads", rng)

    model = TwoGroup()
    groups = model.param_groups()
    assert set(groups) == {"backbone", "heads"}
    assert {name for name, _ in groups["backbone"]} == \
        {"backbone.weight", "backbone.bias"}

    state = model.state_dict()
    clone = TwoGroup()
    clone.load_state_dict(state)
    for name, p in clone.named_parameters().items():
        np.testing.assert_array_equal(p.data, state[name])


def test_module_rejects_mismatched_state(rng):
    model = Linear(3, 2, "g", rng)
    with pytest.raises(KeyError):
        model.load_state_dict({"weight": model.weight.data})
    with pytest.raises(ValueError):
        model.load_state_dict({"weight": np.zeros((2, 2)),
                               "bias": np.zeros(2)})
