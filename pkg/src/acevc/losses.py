"""Training objectives: CTC, angular softmax, Siamese cosine, and the
combined extractor / synthesizer losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Tensor, custom_op, log_softmax, stack

__all__ = [
    "SreLossWeights", "SynthLossWeights", "InadmissibleTargetError",
    "ctc_loss", "ctc_greedy_decode", "angular_softmax_loss",
    "cosine_disentangle_loss", "sre_loss", "synth_loss",
]

_NEG_INF = -1e30
_COS_EPS = 1e-12


class InadmissibleTargetError(ValueError):
    """Target cannot be aligned: too long for the available time steps."""


@dataclass(frozen=True)
class SreLossWeights:
    alpha: float = 1.0  # speaker-verification weight
    beta: float = 1.0   # disentanglement weight

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class SynthLossWeights:
    lambda_pitch: float = 0.1
    lambda_duration: float = 0.1

    def __post_init__(self):
        if self.lambda_pitch < 0 or self.lambda_duration < 0:
            raise ValueError("loss weights must be non-negative")


def _logaddexp(a, b):
    return np.logaddexp(a, b)


def ctc_loss(log_probs: Tensor, target, blank: int | None = None) -> Tensor:
    """Negative log-probability of `target` summed over all CTC alignments.

    `log_probs` is (T, V) with log-softmax-normalized rows; `target` is a
    sequence of non-blank token ids. Computed with the standard forward
    dynamic program over the blank-interleaved state lattice, in log space;
    the gradient comes from the matching backward pass.
    """
    lp = log_probs.data
    if lp.ndim != 2:
        raise ValueError("log_probs must be a (T, V) matrix")
    t_steps, vocab = lp.shape
    if blank is None:
        blank = vocab - 1
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    if target.size and (target.min() < 0 or target.max() >= vocab):
        raise ValueError("target token id outside vocabulary")
    if np.any(target == blank):
        raise ValueError("target must not contain the blank token")

    n_labels = target.size
    repeats = int(np.sum(target[1:] == target[:-1])) if n_labels > 1 else 0
    if n_labels + repeats > t_steps:
        raise InadmissibleTargetError(
            f"target of {n_labels} labels ({repeats} repeats) needs at least "
            f"{n_labels + repeats} steps, got {t_steps}")

    n_states = 2 * n_labels + 1
    labels = np.empty(n_states, dtype=np.int64)
    labels[0::2] = blank
    labels[1::2] = target

    # skip transition s-2 -> s allowed for label states with a distinct label
    can_skip = np.zeros(n_states, dtype=bool)
    for s in range(3, n_states, 2):
        can_skip[s] = target[(s - 1) // 2] != target[(s - 3) // 2]

    alpha = np.full((t_steps, n_states), _NEG_INF)
    alpha[0, 0] = lp[0, blank]
    if n_states > 1:
        alpha[0, 1] = lp[0, labels[1]]
    for t in range(1, t_steps):
        prev = alpha[t - 1]
        step = np.full(n_states, _NEG_INF)
        step[1:] = prev[:-1]
        merged = _logaddexp(prev, step)
        if n_states > 2:
            skip = np.full(n_states, _NEG_INF)
            skip[2:] = prev[:-2]
            merged = np.where(can_skip, _logaddexp(merged, skip), merged)
        alpha[t] = merged + lp[t, labels]

    if n_states > 1:
        total = _logaddexp(alpha[-1, -1], alpha[-1, -2])
    else:
        total = alpha[-1, -1]
    loss_value = -total

    def vjp(g):
        beta = np.full((t_steps, n_states), _NEG_INF)
        beta[-1, -1] = 0.0
        if n_states > 1:
            beta[-1, -2] = 0.0
        for t in range(t_steps - 2, -1, -1):
            nxt = beta[t + 1] + lp[t + 1, labels]
            step = np.full(n_states, _NEG_INF)
            step[:-1] = nxt[1:]
            merged = _logaddexp(nxt, step)
            if n_states > 2:
                skip = np.full(n_states, _NEG_INF)
                skip[:-2] = nxt[2:]
                skip_ok = np.zeros(n_states, dtype=bool)
                skip_ok[:-2] = can_skip[2:]
                merged = np.where(skip_ok, _logaddexp(merged, skip), merged)
            beta[t] = merged

        occupancy = alpha + beta  # log P(state s at time t, over all alignments)
        sym_occ = np.full((t_steps, vocab), _NEG_INF)
        for s in range(n_states):
            sym_occ[:, labels[s]] = _logaddexp(sym_occ[:, labels[s]],
                                               occupancy[:, s])
        grad = -np.exp(sym_occ - total)
        return (g * grad.astype(lp.dtype),)

    return custom_op(np.asarray(loss_value, dtype=lp.dtype), (log_probs,), vjp)


def ctc_greedy_decode(log_probs, blank: int | None = None) -> list:
    """Per-frame argmax, collapse repeats, drop blanks."""
    lp = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    if blank is None:
        blank = lp.shape[1] - 1
    best = np.argmax(lp, axis=1)
    out = []
    prev = None
    for token in best:
        if token != prev and token != blank:
            out.append(int(token))
        prev = token
    return out


def _normalize_rows(x: Tensor) -> Tensor:
    norms = ((x * x).sum(axis=-1, keepdims=True) + _COS_EPS).sqrt()
    return x / norms


def angular_softmax_loss(embeddings: Tensor, labels, weight: Tensor,
                         margin: int = 2, scale: float = 30.0) -> Tensor:
    """Cross-entropy on scaled cosine logits with a multiplicative angular
    margin on the target class: target logit cos(m*theta) via the Chebyshev
    recurrence, others plain cos(theta)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, _ = embeddings.shape
    n_classes = weight.shape[0]
    if labels.size != n:
        raise ValueError("one label per embedding required")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label outside [0, {n_classes})")
    if margin != int(margin) or margin < 1:
        raise ValueError("margin must be a positive integer")
    margin = int(margin)

    cos = _normalize_rows(embeddings) @ _normalize_rows(weight).transpose(1, 0)
    # Chebyshev polynomial T_m(cos) = cos(m*theta)
    t_prev, t_cur = None, cos
    for _ in range(margin - 1):
        if t_prev is None:
            t_prev, t_cur = t_cur, cos * cos * 2.0 - 1.0
        else:
            t_prev, t_cur = t_cur, cos * t_cur * 2.0 - t_prev

    one_hot = np.zeros((n, n_classes), dtype=cos.dtype)
    one_hot[np.arange(n), labels] = 1.0
    logits = (t_cur * one_hot + cos * (1.0 - one_hot)) * scale
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(n), labels]
    return -picked.mean()


def cosine_disentangle_loss(content: Tensor, content_shifted: Tensor) -> Tensor:
    """1 minus the time-mean of per-frame cosine similarities."""
    if content.shape != content_shifted.shape:
        raise ValueError(f"content shapes differ: {content.shape} vs "
                         f"{content_shifted.shape}")
    dots = (content * content_shifted).sum(axis=-1)
    na = ((content * content).sum(axis=-1) + _COS_EPS).sqrt()
    nb = ((content_shifted * content_shifted).sum(axis=-1) + _COS_EPS).sqrt()
    sim = dots / (na * nb)
    return 1.0 - sim.mean()


def sre_loss(l_content, l_sv, l_disentangle, weights: SreLossWeights):
    """Multi-task total: content + alpha * SV + beta * disentangle."""
    return l_content + weights.alpha * l_sv + weights.beta * l_disentangle


def _mse(a: Tensor, b: np.ndarray) -> Tensor:
    diff = a - np.asarray(b, dtype=a.dtype)
    return (diff * diff).mean()


def synth_loss(mel_pred: Tensor, mel_target,
               pitch_pred: Tensor, pitch_target,
               log_dur_pred: Tensor, durations,
               weights: SynthLossWeights):
    """Mel MSE plus weighted pitch and log-duration prediction MSEs.

    Durations are compared in log(1+d) space; pass raw integer durations.
    Returns (total, parts dict).
    """
    mel_target = np.asarray(mel_target)
    if tuple(mel_pred.shape) != mel_target.shape:
        raise ValueError(f"mel shapes differ: {tuple(mel_pred.shape)} vs "
                         f"{mel_target.shape}")
    pitch_target = np.asarray(pitch_target, dtype=np.float64).reshape(-1)
    durations = np.asarray(durations, dtype=np.float64).reshape(-1)
    if pitch_pred.data.size != pitch_target.size:
        raise ValueError("pitch prediction/target lengths differ")
    if log_dur_pred.data.size != durations.size:
        raise ValueError("duration prediction/target lengths differ")

    mel_term = _mse(mel_pred, mel_target)
    pitch_term = _mse(pitch_pred, pitch_target)
    dur_term = _mse(log_dur_pred, np.log1p(durations))
    total = mel_term + weights.lambda_pitch * pitch_term \
        + weights.lambda_duration * dur_term
    return total, {"mel": mel_term, "pitch": pitch_term, "duration": dur_term}
