import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acevc.grouper import GroupedContent, group_content, segment_pitch
from acevc.sre import ContentSequence


def content_from_argmax(ids, vocab=3, dim=4, rng=None):
    """Build a ContentSequence whose per-step argmax is exactly `ids`."""
    ids = np.asarray(ids)
    log_probs = np.full((ids.size, vocab), -9.0)
    log_probs[np.arange(ids.size), ids] = -0.1
    if rng is None:
        vectors = np.arange(ids.size * dim, dtype=np.float32).reshape(ids.size, dim)
    else:
        vectors = rng.normal(size=(ids.size, dim)).astype(np.float32)
    return ContentSequence(vectors, log_probs.astype(np.float32))


def test_grouping_definition_example():
    content = content_from_argmax([0, 0, 1, 1, 1, 2])
    grouped = group_content(content)
    np.testing.assert_array_equal(grouped.durations, [2, 3, 1])
    np.testing.assert_array_equal(grouped.tokens, [0, 1, 2])
    np.testing.assert_allclose(grouped.vectors[0],
                               content.vectors[:2].mean(axis=0))
    np.testing.assert_allclose(grouped.vectors[1],
                               content.vectors[2:5].mean(axis=0))


def test_grouping_constant_sequence():
    content = content_from_argmax([1] * 5)
    grouped = group_content(content)
    np.testing.assert_array_equal(grouped.durations, [5])
    np.testing.assert_allclose(grouped.vectors[0], content.vectors.mean(axis=0))


def test_grouping_alternating_no_merge():
    content = content_from_argmax([0, 1, 0, 1])
    grouped = group_content(content)
    np.testing.assert_array_equal(grouped.durations, [1, 1, 1, 1])
    np.testing.assert_allclose(grouped.vectors, content.vectors)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=40), st.integers(0, 10**6))
def test_grouping_laws(ids, seed):
    rng = np.random.default_rng(seed)
    content = content_from_argmax(ids, rng=rng)
    grouped = group_content(content)
    # durations partition the sequence
    assert grouped.durations.sum() == len(ids)
    assert np.all(grouped.durations >= 1)
    # expanding tokens by durations reproduces the argmax sequence
    expanded = np.repeat(grouped.tokens, grouped.durations)
    np.testing.assert_array_equal(expanded, ids)
    # no two adjacent groups share a token (token-level idempotence)
    assert np.all(np.diff(grouped.tokens) != 0) or grouped.n_groups == 1


def test_segment_pitch_single_group():
    out = segment_pitch(np.array([1.0, 1.0, 1.0, 1.0]), np.array([1]), subsample=4)
    np.testing.assert_allclose(out, [1.0])


def test_segment_pitch_counts_unvoiced_zeros():
    pitch = np.array([0, 0, 2, 2, 2, 2, 0, 0], dtype=float)
    out = segment_pitch(pitch, np.array([2]), subsample=4)
    np.testing.assert_allclose(out, [1.0])  # mean of all 8 values


def test_segment_pitch_all_unvoiced():
    out = segment_pitch(np.zeros(12), np.array([1, 2]), subsample=4)
    np.testing.assert_allclose(out, [0.0, 0.0])


def test_segment_pitch_spans():
    pitch = np.concatenate([np.full(4, 1.0), np.full(8, -1.0)])
    out = segment_pitch(pitch, np.array([1, 2]), subsample=4)
    np.testing.assert_allclose(out, [1.0, -1.0])


def test_segment_pitch_short_tail_tolerated():
    # contour may be up to one subsample group short of full coverage
    pitch = np.full(9, 2.0)
    out = segment_pitch(pitch, np.array([1, 2]), subsample=4)
    np.testing.assert_allclose(out, [2.0, 2.0])


def test_segment_pitch_rejects_empty_groups():
    with pytest.raises(ValueError):
        segment_pitch(np.zeros(8), np.array([1, 0]), subsample=4)
    with pytest.raises(ValueError):
        segment_pitch(np.zeros(8), np.array([], dtype=int), subsample=4)


def test_segment_pitch_rejects_short_contour():
    with pytest.raises(ValueError):
        segment_pitch(np.zeros(3), np.array([1, 1]), subsample=4)


def test_with_pitch_returns_filled_copy():
    grouped = GroupedContent(np.zeros((2, 3)), np.array([1, 1]),
                             np.array([0, 1]))
    filled = grouped.with_pitch(np.array([0.5, -0.5]))
    assert grouped.pitch is None
    np.testing.assert_allclose(filled.pitch, [0.5, -0.5])
