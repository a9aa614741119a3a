import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acevc.evaluation import (TrialPair, TrialSet, char_error_rate,
                              eer_from_scores, equal_error_rate, levenshtein,
                              probe_disentanglement)

from oracles import eer_by_sweep


# ---------------------------------------------------------------------------
# character error rate

def test_cer_examples():
    assert char_error_rate("abc", "abc") == 0.0
    assert char_error_rate("abc", "axc") == pytest.approx(1 / 3)
    assert char_error_rate("abc", "") == 1.0


def test_cer_empty_reference_rejected():
    with pytest.raises(ValueError):
        char_error_rate("", "abc")


def test_levenshtein_known_values():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("abcde", "abcde") == 0
    assert levenshtein("", "xyz") == 3


@settings(max_examples=100, deadline=None)
@given(st.text("abc", min_size=1, max_size=8), st.text("abc", max_size=8),
       st.text("abc", max_size=8))
def test_cer_triangle_bound(a, b, c):
    assert char_error_rate(a, c) <= \
        (levenshtein(a, b) + levenshtein(b, c)) / len(a) + 1e-12


# ---------------------------------------------------------------------------
# equal error rate

def test_eer_perfect_separation():
    assert eer_from_scores([0.9, 0.8, 0.2, 0.1],
                           [True, True, False, False]) == 0.0


def test_eer_interleaved_half():
    assert eer_from_scores([0.9, 0.1, 0.8, 0.2],
                           [True, True, False, False]) == pytest.approx(0.5)


def test_eer_identical_distributions_chance():
    scores = [0.3, 0.5, 0.7, 0.3, 0.5, 0.7]
    labels = [True, True, True, False, False, False]
    assert eer_from_scores(scores, labels) == pytest.approx(0.5)


def test_eer_degenerate_rejected():
    with pytest.raises(ValueError):
        eer_from_scores([0.5, 0.6], [True, True])


def test_eer_matches_brute_force_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 100))
        scores = rng.normal(size=n)
        labels = rng.uniform(size=n) < 0.5
        if labels.all() or not labels.any():
            labels[0] = ~labels[0]
        got = eer_from_scores(scores, labels)
        want = eer_by_sweep(scores, labels)
        assert got == want  # identical definition, exact match


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_eer_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 60))
    scores = rng.normal(size=n)
    labels = rng.uniform(size=n) < 0.5
    if labels.all() or not labels.any():
        labels[0] = ~labels[0]
    base = eer_from_scores(scores, labels)
    assert eer_from_scores(3.0 * scores + 7.0, labels) == base
    assert eer_from_scores(np.arctan(scores), labels) == base
    assert eer_from_scores(scores ** 3 + scores, labels) == base


def test_equal_error_rate_uses_cosine_scores():
    up = np.array([1.0, 0.0])
    tilted = np.array([1.0, 0.2])
    down = np.array([-1.0, 0.1])
    pairs = [TrialPair(up, tilted, True), TrialPair(up, up, True),
             TrialPair(up, down, False), TrialPair(tilted, down, False)]
    trials = TrialSet(pairs)
    assert trials.n_positive == 2 and trials.n_negative == 2
    assert equal_error_rate(trials) == 0.0


# ---------------------------------------------------------------------------
# probe

def test_probe_separable_embeddings_reach_full_accuracy():
    rng = np.random.default_rng(0)
    centers = np.eye(4) * 5.0
    labels = np.repeat(np.arange(4), 12)
    x = centers[labels] + 0.05 * rng.normal(size=(48, 4))
    mask = np.zeros(48, dtype=bool)
    mask[::6] = True  # hold out 2 per class
    acc = probe_disentanglement(x, labels, mask, steps=200, seed=0)
    assert acc == 1.0


def test_probe_shuffled_labels_near_chance():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(160, 8)).astype(np.float32)
    labels = rng.integers(0, 4, size=160)
    mask = np.zeros(160, dtype=bool)
    mask[-40:] = True
    acc = probe_disentanglement(x, labels, mask, steps=150, seed=0)
    # chance is 0.25; binomial noise over 40 held-out points
    assert acc < 0.55


def test_probe_single_class_rejected():
    with pytest.raises(ValueError):
        probe_disentanglement(np.zeros((4, 2)), np.zeros(4, dtype=int),
                              np.array([False, False, True, True]))
