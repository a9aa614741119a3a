import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acevc.losses import (InadmissibleTargetError, SreLossWeights,
                          SynthLossWeights, angular_softmax_loss,
                          cosine_disentangle_loss, ctc_greedy_decode,
                          ctc_loss, sre_loss, synth_loss)
from acevc.nn import Parameter, Tensor

from oracles import ctc_loss_by_enumeration, finite_difference


def random_log_probs(rng, t_steps, vocab):
    logits = rng.normal(size=(t_steps, vocab)) * 2.0
    return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# CTC

def test_ctc_certain_single_token_is_free():
    lp = np.log(np.array([[1.0 - 2e-12, 1e-12, 1e-12]]))
    loss = ctc_loss(Tensor(lp), [0], blank=2)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-9)


def test_ctc_uniform_two_step_single_token():
    # vocab {a, b, blank}, uniform rows: paths aa, a-, -a each have mass 1/9
    lp = np.full((2, 3), np.log(1.0 / 3.0))
    loss = ctc_loss(Tensor(lp), [0], blank=2)
    assert float(loss.data) == pytest.approx(np.log(3.0), abs=1e-12)


def test_ctc_matches_enumeration_on_random_instances(rng):
    for _ in range(60):
        t_steps = int(rng.integers(1, 7))
        vocab = int(rng.integers(2, 5))  # includes blank
        max_len = min(t_steps, 4)
        target = rng.integers(0, vocab - 1,
                              size=int(rng.integers(0, max_len + 1)))
        lp = random_log_probs(rng, t_steps, vocab)
        want = ctc_loss_by_enumeration(lp, target, blank=vocab - 1)
        try:
            got = float(ctc_loss(Tensor(lp), target, blank=vocab - 1).data)
        except InadmissibleTargetError:
            assert np.isinf(want)
            continue
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_ctc_gradient_matches_finite_differences(rng):
    lp = random_log_probs(rng, 5, 3)
    target = [0, 1]
    x = Tensor(lp.copy(), requires_grad=True)
    ctc_loss(x, target, blank=2).backward()
    numeric = finite_difference(
        lambda: float(ctc_loss(Tensor(lp), target, blank=2).data), lp)
    np.testing.assert_allclose(x.grad, numeric, rtol=1e-5, atol=1e-8)


def test_ctc_inadmissible_target_raises():
    lp = np.full((2, 3), np.log(1.0 / 3.0))
    with pytest.raises(InadmissibleTargetError):
        ctc_loss(Tensor(lp), [0, 0], blank=2)  # repeat needs a separator
    with pytest.raises(InadmissibleTargetError):
        ctc_loss(Tensor(lp), [0, 1, 0], blank=2)


def test_ctc_rejects_blank_in_target():
    lp = np.full((3, 3), np.log(1.0 / 3.0))
    with pytest.raises(ValueError):
        ctc_loss(Tensor(lp), [2], blank=2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 4), st.integers(0, 1000))
def test_ctc_enumeration_property(t_steps, vocab, seed):
    rng = np.random.default_rng(seed)
    target_len = int(rng.integers(0, min(t_steps, 3) + 1))
    target = rng.integers(0, vocab - 1, size=target_len)
    lp = random_log_probs(rng, t_steps, vocab)
    want = ctc_loss_by_enumeration(lp, target, blank=vocab - 1)
    try:
        got = float(ctc_loss(Tensor(lp), target, blank=vocab - 1).data)
    except InadmissibleTargetError:
        assert np.isinf(want)
        return
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_ctc_greedy_decode_rules():
    def lp_for(ids, vocab=3):
        lp = np.full((len(ids), vocab), -10.0)
        for t, idx in enumerate(ids):
            lp[t, idx] = 0.0
        return lp

    assert ctc_greedy_decode(lp_for([0, 0, 2, 1, 1]), blank=2) == [0, 1]
    assert ctc_greedy_decode(lp_for([2, 2, 2]), blank=2) == []
    assert ctc_greedy_decode(lp_for([0, 2, 0]), blank=2) == [0, 0]


# ---------------------------------------------------------------------------
# angular softmax

def unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_angular_margin_one_is_cross_entropy():
    rng = np.random.default_rng(0)
    emb = unit_rows(rng.normal(size=(6, 4))).astype(np.float64)
    weight = unit_rows(rng.normal(size=(3, 4))).astype(np.float64)
    labels = rng.integers(0, 3, size=6)
    scale = 7.0
    loss = angular_softmax_loss(Tensor(emb), labels, Tensor(weight),
                                margin=1, scale=scale)
    logits = scale * emb @ weight.T
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    want = -logp[np.arange(6), labels].mean()
    np.testing.assert_allclose(float(loss.data), want, atol=1e-9)


def test_angular_two_class_hand_value():
    # cosines (1, 0) toward the correct class, margin 1, scale 1
    emb = np.array([[1.0, 0.0]])
    weight = np.array([[1.0, 0.0], [0.0, 1.0]])
    loss = angular_softmax_loss(Tensor(emb), [0], Tensor(weight),
                                margin=1, scale=1.0)
    want = -np.log(np.e / (np.e + 1.0))
    np.testing.assert_allclose(float(loss.data), want, atol=1e-6)


def test_angular_wrong_direction_costs_more():
    weight = np.array([[1.0, 0.0], [0.0, 1.0]])
    aligned = angular_softmax_loss(Tensor(np.array([[1.0, 0.0]])), [0],
                                   Tensor(weight), margin=2, scale=10.0)
    on_wrong = angular_softmax_loss(Tensor(np.array([[0.0, 1.0]])), [0],
                                    Tensor(weight), margin=2, scale=10.0)
    assert float(on_wrong.data) > float(aligned.data)


def test_angular_label_out_of_range():
    with pytest.raises(ValueError):
        angular_softmax_loss(Tensor(np.ones((1, 2))), [5],
                             Tensor(np.ones((2, 2))))


def test_angular_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    emb = rng.normal(size=(4, 3))
    weight = rng.normal(size=(3, 3))
    labels = [0, 2, 1, 0]

    w = Parameter(weight.copy(), group="g", name="w")
    e = Tensor(emb.copy(), requires_grad=True)
    angular_softmax_loss(e, labels, w, margin=2, scale=5.0).backward()
    for analytic, arr in ((w.grad, weight), (e.grad, emb)):
        numeric = finite_difference(
            lambda: float(angular_softmax_loss(Tensor(emb), labels,
                                               Tensor(weight), margin=2,
                                               scale=5.0).data), arr)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_angular_batch_permutation_equivariant():
    rng = np.random.default_rng(4)
    emb = rng.normal(size=(5, 4))
    weight = rng.normal(size=(3, 4))
    labels = np.array([0, 1, 2, 1, 0])
    perm = rng.permutation(5)
    a = angular_softmax_loss(Tensor(emb), labels, Tensor(weight))
    b = angular_softmax_loss(Tensor(emb[perm]), labels[perm], Tensor(weight))
    np.testing.assert_allclose(float(a.data), float(b.data), rtol=1e-12)


# ---------------------------------------------------------------------------
# cosine disentanglement

def test_cosine_identical_orthogonal_opposite():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(4, 6))
    assert float(cosine_disentangle_loss(Tensor(z), Tensor(z.copy())).data) \
        == pytest.approx(0.0, abs=1e-6)
    assert float(cosine_disentangle_loss(Tensor(z), Tensor(-z)).data) \
        == pytest.approx(2.0, abs=1e-6)
    a = np.zeros((3, 2)); a[:, 0] = 1.0
    b = np.zeros((3, 2)); b[:, 1] = 1.0
    assert float(cosine_disentangle_loss(Tensor(a), Tensor(b)).data) \
        == pytest.approx(1.0, abs=1e-12)


def test_cosine_zero_norm_frame_counts_as_zero_similarity():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[1.0, 0.0], [1.0, 0.0]])
    loss = cosine_disentangle_loss(Tensor(a), Tensor(b))
    assert float(loss.data) == pytest.approx(1.0 - 0.5, abs=1e-5)


def test_cosine_shape_mismatch():
    with pytest.raises(ValueError):
        cosine_disentangle_loss(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_cosine_range_and_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(5, 4))
    base = float(cosine_disentangle_loss(Tensor(a), Tensor(b)).data)
    assert 0.0 <= base <= 2.0
    scales = rng.uniform(0.1, 9.0, size=(5, 1))
    scaled = float(cosine_disentangle_loss(Tensor(a * scales), Tensor(b)).data)
    np.testing.assert_allclose(scaled, base, atol=1e-9)


# ---------------------------------------------------------------------------
# combinations

def test_sre_loss_arithmetic():
    w = SreLossWeights(alpha=0.5, beta=1.0)
    out = sre_loss(Tensor(np.float64(1.0)), Tensor(np.float64(2.0)),
                   Tensor(np.float64(0.0)), w)
    assert float(out.data) == pytest.approx(2.0)
    w0 = SreLossWeights(alpha=0.5, beta=0.0)
    out = sre_loss(Tensor(np.float64(1.0)), Tensor(np.float64(2.0)),
                   Tensor(np.float64(9.0)), w0)
    assert float(out.data) == pytest.approx(2.0)
    zero = sre_loss(Tensor(np.float64(0.0)), Tensor(np.float64(0.0)),
                    Tensor(np.float64(0.0)), w)
    assert float(zero.data) == 0.0


def test_weights_reject_negative():
    with pytest.raises(ValueError):
        SreLossWeights(alpha=-1.0)
    with pytest.raises(ValueError):
        SynthLossWeights(lambda_pitch=-0.1)


def test_synth_loss_terms():
    rng = np.random.default_rng(6)
    mel_target = rng.normal(size=(8, 5))
    pitch = rng.normal(size=3)
    durs = np.array([2, 1, 4])
    w = SynthLossWeights(0.1, 0.1)

    perfect, parts = synth_loss(Tensor(mel_target.copy()), mel_target,
                                Tensor(pitch.copy()), pitch,
                                Tensor(np.log1p(durs).astype(np.float64)), durs, w)
    assert float(perfect.data) == pytest.approx(0.0, abs=1e-12)

    off = synth_loss(Tensor(mel_target + 0.3), mel_target,
                     Tensor(pitch.copy()), pitch,
                     Tensor(np.log1p(durs).astype(np.float64)), durs, w)[0]
    assert float(off.data) == pytest.approx(0.09, abs=1e-9)

    lam0 = SynthLossWeights(0.0, 0.0)
    only_mel = synth_loss(Tensor(mel_target + 0.3), mel_target,
                          Tensor(pitch + 5.0), pitch,
                          Tensor(np.zeros(3)), durs, lam0)[0]
    assert float(only_mel.data) == pytest.approx(0.09, abs=1e-9)


def test_synth_loss_shape_mismatch():
    w = SynthLossWeights()
    with pytest.raises(ValueError):
        synth_loss(Tensor(np.ones((3, 5))), np.ones((4, 5)),
                   Tensor(np.ones(2)), np.ones(2),
                   Tensor(np.ones(2)), np.ones(2), w)
