"""Metrics and the disentanglement probe: character error rate, equal error
rate over paired cosine scores, and a small speaker classifier trained on
frozen embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .losses import ctc_greedy_decode
from .nn import Adam, Linear, Module, ParamGroup, Tensor, log_softmax

__all__ = [
    "TrialPair", "TrialSet", "levenshtein", "char_error_rate",
    "eer_from_scores", "equal_error_rate", "probe_disentanglement",
    "transcribe_cer",
]


# ---------------------------------------------------------------------------
# character error rate

def levenshtein(reference: str, hypothesis: str) -> int:
    """Unit-cost edit distance."""
    n, m = len(reference), len(hypothesis)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (reference[i - 1] != hypothesis[j - 1])
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[m]


def char_error_rate(reference: str, hypothesis: str) -> float:
    if len(reference) == 0:
        raise ValueError("empty reference")
    return levenshtein(reference, hypothesis) / len(reference)


# ---------------------------------------------------------------------------
# equal error rate

@dataclass(frozen=True)
class TrialPair:
    embedding_a: np.ndarray
    embedding_b: np.ndarray
    is_same_speaker: bool


@dataclass
class TrialSet:
    pairs: list

    @property
    def n_positive(self) -> int:
        return sum(p.is_same_speaker for p in self.pairs)

    @property
    def n_negative(self) -> int:
        return len(self.pairs) - self.n_positive

    def scores(self) -> tuple:
        """Cosine similarity per pair plus same-speaker labels."""
        scores = np.empty(len(self.pairs))
        labels = np.empty(len(self.pairs), dtype=bool)
        for i, pair in enumerate(self.pairs):
            a = np.asarray(pair.embedding_a, dtype=np.float64)
            b = np.asarray(pair.embedding_b, dtype=np.float64)
            denom = np.linalg.norm(a) * np.linalg.norm(b)
            scores[i] = float(a @ b / denom) if denom > 0 else 0.0
            labels[i] = pair.is_same_speaker
        return scores, labels


def eer_from_scores(scores, labels) -> float:
    """EER from verification scores: sweep thresholds at the distinct score
    values (accept when score >= threshold) and linearly interpolate between
    the adjacent operating points where false-accept crosses false-reject.
    Depends only on score ranks, so it is invariant under strictly monotone
    transforms."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative pair")

    thresholds = np.concatenate([[-np.inf], np.unique(scores), [np.inf]])
    prev_far = prev_frr = None
    for threshold in thresholds:
        far = float(np.sum(scores[~labels] >= threshold)) / n_neg
        frr = float(np.sum(scores[labels] < threshold)) / n_pos
        if far <= frr:
            if far == frr:
                return far
            # interpolate between the previous point (far > frr) and here
            a = prev_far - prev_frr
            b = far - frr
            t = a / (a - b)
            return prev_far + t * (far - prev_far)
        prev_far, prev_frr = far, frr
    return prev_far  # unreachable: far ends at 0, frr at 1


def equal_error_rate(trials: TrialSet) -> float:
    scores, labels = trials.scores()
    return eer_from_scores(scores, labels)


# ---------------------------------------------------------------------------
# disentanglement probe

class _Probe(Module):
    """Three linear layers, 256 hidden units, ReLU."""

    def __init__(self, in_dim, hidden, n_classes, rng):
        super().__init__()
        self.fc1 = Linear(in_dim, hidden, "probe", rng)
        self.fc2 = Linear(hidden, hidden, "probe", rng)
        self.fc3 = Linear(hidden, n_classes, "probe", rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc3(self.fc2(self.fc1(x).relu()).relu())


def probe_disentanglement(embeddings, labels, held_out_mask,
                          hidden: int = 256, steps: int = 400,
                          learning_rate: float = 1e-3, seed: int = 0) -> float:
    """Train a speaker classifier on frozen embeddings; return held-out
    accuracy. Content embeddings must be time-mean-pooled by the caller."""
    embeddings = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    held_out_mask = np.asarray(held_out_mask, dtype=bool)
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.size:
        raise ValueError("need one label per embedding row")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("probe needs at least two speakers")
    n_classes = int(classes.max()) + 1

    train_x = embeddings[~held_out_mask]
    train_y = labels[~held_out_mask]
    test_x = embeddings[held_out_mask]
    test_y = labels[held_out_mask]
    if train_x.shape[0] == 0 or test_x.shape[0] == 0:
        raise ValueError("both splits must be non-empty")

    rng = np.random.default_rng(seed)
    probe = _Probe(embeddings.shape[1], hidden, n_classes, rng)
    optimizer = Adam([ParamGroup("probe", list(probe.named_parameters().items()),
                                 learning_rate)])
    x = Tensor(train_x)
    idx = np.arange(train_y.size)
    for _ in range(steps):
        probe.zero_grad()
        logp = log_softmax(probe(x), axis=-1)
        loss = -logp[idx, train_y].mean()
        loss.backward()
        optimizer.step()

    predictions = np.argmax(probe(Tensor(test_x)).data, axis=1)
    return float(np.mean(predictions == test_y))


# ---------------------------------------------------------------------------
# transcription-based intelligibility

def transcribe_cer(extractor, source: dsp.Waveform, converted: dsp.Waveform,
                   vocab: str) -> float:
    """Greedy-decode both waveforms with the extractor's content head and
    return the character error rate between the two decodes."""
    decoded = []
    for wave in (source, converted):
        content, _ = extractor.extract(dsp.mel_spectrogram(wave))
        ids = ctc_greedy_decode(content.log_probs,
                                blank=extractor.config.blank_id)
        decoded.append("".join(vocab[i] for i in ids))
    source_text, converted_text = decoded
    if not source_text:
        raise ValueError("empty source decode")
    return char_error_rate(source_text, converted_text)
