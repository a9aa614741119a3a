"""Collapse consecutive same-token content vectors into grouped vectors
with integer duration targets, and average pitch per group."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GroupedContent", "group_content", "segment_pitch"]


@dataclass
class GroupedContent:
    """Run-length grouped content: one row per run of equal predicted tokens.

    Durations are in content steps (subsampled frames); multiply by the
    subsample factor to get mel frames. Blank-token runs are kept: the
    synthesizer needs silence/transition timing. `pitch` is filled by
    segment_pitch and is the mean normalized pitch over each group's span.
    """

    vectors: np.ndarray    # (M, D) group means
    durations: np.ndarray  # (M,) int64, each >= 1
    tokens: np.ndarray     # (M,) int64 predicted token ids
    pitch: np.ndarray | None = None  # (M,) mean normalized pitch

    @property
    def n_groups(self) -> int:
        return self.durations.size

    @property
    def total_steps(self) -> int:
        return int(self.durations.sum())

    def with_pitch(self, pitch: np.ndarray) -> "GroupedContent":
        return GroupedContent(self.vectors, self.durations, self.tokens,
                              np.asarray(pitch, dtype=np.float64))


def group_content(content) -> GroupedContent:
    """Group consecutive content vectors sharing the same predicted token.

    `content` provides per-step vectors and token log-probabilities
    (a sre.ContentSequence or any object with .vectors and .log_probs).
    Group vectors are temporal means; durations are run lengths.
    """
    vectors = np.asarray(content.vectors)
    log_probs = np.asarray(content.log_probs)
    if vectors.ndim != 2 or log_probs.ndim != 2 \
            or vectors.shape[0] != log_probs.shape[0]:
        raise ValueError("content vectors and log_probs must align")
    n_steps = vectors.shape[0]
    if n_steps < 1:
        raise ValueError("empty content sequence")

    best = np.argmax(log_probs, axis=1)
    boundaries = np.nonzero(np.diff(best))[0] + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n_steps]])

    group_vecs = np.stack([vectors[a:b].mean(axis=0) for a, b in zip(starts, ends)])
    durations = (ends - starts).astype(np.int64)
    tokens = best[starts].astype(np.int64)
    return GroupedContent(group_vecs, durations, tokens)


def segment_pitch(norm_pitch: np.ndarray, durations: np.ndarray,
                  subsample: int = 4) -> np.ndarray:
    """Mean normalized pitch over each group's span of mel frames.

    Group m covers mel frames [subsample*start_m, subsample*(start_m+d_m));
    unvoiced zeros count toward the mean. Trailing frames beyond the last
    group are ignored; a short final span is averaged over what exists.
    """
    norm_pitch = np.asarray(norm_pitch, dtype=np.float64)
    durations = np.asarray(durations, dtype=np.int64)
    if durations.size == 0 or np.any(durations <= 0):
        raise ValueError("durations must be positive (no empty groups)")
    total = int(durations.sum())
    if norm_pitch.size < subsample * total - subsample:
        raise ValueError(f"pitch contour of {norm_pitch.size} frames cannot "
                         f"cover {total} groups at subsample {subsample}")

    starts = np.concatenate([[0], np.cumsum(durations)[:-1]])
    out = np.zeros(durations.size)
    for m, (start, dur) in enumerate(zip(starts, durations)):
        lo = subsample * int(start)
        hi = min(subsample * int(start + dur), norm_pitch.size)
        span = norm_pitch[lo:hi]
        out[m] = span.mean() if span.size else 0.0
    return out
