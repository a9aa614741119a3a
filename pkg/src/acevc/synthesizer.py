"""Mel-spectrogram synthesis from grouped content and a speaker embedding.

Two feed-forward transformer stacks: the group encoder runs on grouped
content steps and feeds the duration/pitch predictors; after adding a pitch
embedding, hidden states are discretely upsampled by per-group durations
and decoded to 80-band log-mel frames. Both prosody modes are supported:
mimic (ground-truth pitch/durations from the source) and adaptive
(predicted pitch/durations for the target voice).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import dsp
from .grouper import GroupedContent
from .losses import SynthLossWeights, synth_loss
from .nn import (Adam, Conv1d, LayerNorm, Linear, Module, ModuleList,
                 MultiHeadSelfAttention, NonFiniteLossError, ParamGroup,
                 Tensor, custom_op)
from .nn.checkpoint import (load_model_arrays, model_arrays, read_container,
                            write_container)
from .sre import SpeakerEmbedding

__all__ = [
    "SynthesizerConfig", "MelSynthesizer", "SynthExample",
    "regulate_durations", "train_step_synth", "train_synthesizer",
    "save_synthesizer", "load_synthesizer",
]

SYNTH_GROUP = "synth"


@dataclass(frozen=True)
class SynthesizerConfig:
    content_dim: int = 64
    speaker_dim: int = 64
    hidden: int = 192
    blocks: int = 2
    heads: int = 2
    conv_kernel: int = 3
    mel_bands: int = 80
    subsample: int = 4  # must match the extractor
    lambda_pitch: float = 0.1
    lambda_duration: float = 0.1
    learning_rate: float = 1e-3

    @property
    def loss_weights(self) -> SynthLossWeights:
        return SynthLossWeights(self.lambda_pitch, self.lambda_duration)


class FftBlock(Module):
    """Self-attention plus a 1-D convolutional feed-forward, pre-norm."""

    def __init__(self, dim, heads, kernel, rng, dtype=np.float32):
        super().__init__()
        self.norm_attn = LayerNorm(dim, SYNTH_GROUP, dtype=dtype)
        self.attn = MultiHeadSelfAttention(dim, heads, SYNTH_GROUP, rng, dtype=dtype)
        self.norm_conv = LayerNorm(dim, SYNTH_GROUP, dtype=dtype)
        self.conv_in = Conv1d(dim, dim * 2, kernel, SYNTH_GROUP, rng, dtype=dtype)
        self.conv_out = Conv1d(dim * 2, dim, kernel, SYNTH_GROUP, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm_attn(x))
        x = x + self.conv_out(self.conv_in(self.norm_conv(x)).gelu())
        return x


class ScalarPredictor(Module):
    """Per-step scalar head: conv / gelu / layer-norm twice, then linear."""

    def __init__(self, dim, kernel, rng, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv1d(dim, dim, kernel, SYNTH_GROUP, rng, dtype=dtype)
        self.norm1 = LayerNorm(dim, SYNTH_GROUP, dtype=dtype)
        self.conv2 = Conv1d(dim, dim, kernel, SYNTH_GROUP, rng, dtype=dtype)
        self.norm2 = LayerNorm(dim, SYNTH_GROUP, dtype=dtype)
        self.out = Linear(dim, 1, SYNTH_GROUP, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(self.conv1(x).gelu())
        x = self.norm2(self.conv2(x).gelu())
        return self.out(x).reshape(x.shape[0])


def regulate_durations(hidden: Tensor, durations, subsample: int = 4) -> Tensor:
    """Repeat step m durations[m]*subsample times; zero-duration steps drop."""
    durations = np.asarray(durations, dtype=np.int64)
    if np.any(durations < 0):
        raise ValueError("durations must be non-negative")
    counts = durations * subsample
    if counts.sum() == 0:
        raise ValueError("empty regulation: all durations are zero")
    data = np.repeat(hidden.data, counts, axis=0)
    seg_ids = np.repeat(np.arange(durations.size), counts)
    shape = hidden.data.shape

    def vjp(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, seg_ids, g)
        return (gx,)

    return custom_op(data, (hidden,), vjp)


class MelSynthesizer(Module):
    def __init__(self, config: SynthesizerConfig, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.config = config
        c = config
        self.in_proj = Linear(c.content_dim + c.speaker_dim, c.hidden,
                              SYNTH_GROUP, rng, dtype=dtype)
        self.encoder_blocks = ModuleList([
            FftBlock(c.hidden, c.heads, c.conv_kernel, rng, dtype=dtype)
            for _ in range(c.blocks)])
        self.encoder_norm = LayerNorm(c.hidden, SYNTH_GROUP, dtype=dtype)
        self.duration_predictor = ScalarPredictor(c.hidden, c.conv_kernel, rng,
                                                  dtype=dtype)
        self.pitch_predictor = ScalarPredictor(c.hidden, c.conv_kernel, rng,
                                               dtype=dtype)
        self.pitch_proj = Linear(1, c.hidden, SYNTH_GROUP, rng, dtype=dtype)
        self.decoder_blocks = ModuleList([
            FftBlock(c.hidden, c.heads, c.conv_kernel, rng, dtype=dtype)
            for _ in range(c.blocks)])
        self.decoder_norm = LayerNorm(c.hidden, SYNTH_GROUP, dtype=dtype)
        self.mel_proj = Linear(c.hidden, c.mel_bands, SYNTH_GROUP, rng, dtype=dtype)

    # -- forward pieces ----------------------------------------------------

    def encode_groups(self, vectors, speaker) -> Tensor:
        """Grouped content (M, D_c) + speaker (D_s,) -> hidden (M, H)."""
        vectors = np.asarray(vectors, dtype=self.dtype)
        speaker_vec = np.asarray(
            speaker.vector if isinstance(speaker, SpeakerEmbedding) else speaker,
            dtype=self.dtype)
        c = self.config
        if vectors.ndim != 2 or vectors.shape[1] != c.content_dim:
            raise ValueError(f"expected (M, {c.content_dim}) grouped content")
        if speaker_vec.shape != (c.speaker_dim,):
            raise ValueError(f"expected ({c.speaker_dim},) speaker embedding")
        tiled = np.broadcast_to(speaker_vec, (vectors.shape[0], c.speaker_dim))
        joined = Tensor(np.concatenate([vectors, tiled], axis=1))
        x = self.in_proj(joined)
        for block in self.encoder_blocks:
            x = block(x)
        return self.encoder_norm(x)

    def predict_log_duration(self, hidden: Tensor) -> Tensor:
        """Per-group duration in log1p(content steps)."""
        return self.duration_predictor(hidden)

    def predict_pitch(self, hidden: Tensor) -> Tensor:
        """Per-group normalized pitch."""
        return self.pitch_predictor(hidden)

    def add_pitch(self, hidden: Tensor, pitch) -> Tensor:
        """Project the per-group pitch scalar to hidden size, add residually."""
        if isinstance(pitch, Tensor):
            column = pitch.reshape(pitch.shape[0], 1)
        else:
            pitch = np.asarray(pitch, dtype=self.dtype).reshape(-1, 1)
            if pitch.shape[0] != hidden.shape[0]:
                raise ValueError("pitch length must match hidden steps")
            column = Tensor(pitch)
        return hidden + self.pitch_proj(column)

    def decode(self, regulated: Tensor) -> Tensor:
        x = regulated
        for block in self.decoder_blocks:
            x = block(x)
        return self.mel_proj(self.decoder_norm(x))

    # -- inference -----------------------------------------------------------

    def durations_from_log(self, log_durations: np.ndarray) -> np.ndarray:
        """Invert log1p and round to non-negative integers."""
        linear = np.expm1(np.asarray(log_durations, dtype=np.float64))
        return np.maximum(np.rint(linear), 0.0).astype(np.int64)

    def infer(self, grouped: GroupedContent, speaker, mode: str) -> dsp.MelSpectrogram:
        """mimic: source durations and pitch; adaptive: predicted ones."""
        if mode not in ("mimic", "adaptive"):
            raise ValueError(f"unknown mode {mode!r}")
        hidden = self.encode_groups(grouped.vectors, speaker)
        if mode == "mimic":
            if grouped.pitch is None:
                raise ValueError("mimic mode needs source group pitch")
            durations = np.asarray(grouped.durations, dtype=np.int64)
            pitch = np.asarray(grouped.pitch, dtype=np.float64)
        else:
            durations = self.durations_from_log(
                self.predict_log_duration(hidden).data)
            pitch = self.predict_pitch(hidden).data.astype(np.float64)
        if durations.sum() == 0:
            raise ValueError("empty regulation: all durations are zero")
        pitched = self.add_pitch(hidden, pitch.astype(self.dtype))
        regulated = regulate_durations(pitched, durations, self.config.subsample)
        mel = self.decode(regulated)
        return dsp.MelSpectrogram(mel.data.astype(np.float32))


# ---------------------------------------------------------------------------
# training

@dataclass
class SynthExample:
    """Teacher-forcing target bundle for one utterance."""

    grouped: GroupedContent       # with pitch filled in
    speaker: np.ndarray           # (D_s,) embedding
    mel_target: np.ndarray        # (subsample * total_steps, 80)


def teacher_forward(model: MelSynthesizer, example: SynthExample):
    hidden = model.encode_groups(example.grouped.vectors, example.speaker)
    log_dur = model.predict_log_duration(hidden)
    pitch_pred = model.predict_pitch(hidden)
    pitched = model.add_pitch(hidden, example.grouped.pitch.astype(model.dtype))
    regulated = regulate_durations(pitched, example.grouped.durations,
                                   model.config.subsample)
    mel_pred = model.decode(regulated)
    return mel_pred, pitch_pred, log_dur


def train_step_synth(model: MelSynthesizer, optimizer: Adam, batch,
                     weights: SynthLossWeights | None = None):
    """Teacher-forced step over a batch of SynthExamples; one Adam update."""
    if weights is None:
        weights = model.config.loss_weights
    model.zero_grad()
    totals = None
    parts_sum = {"mel": 0.0, "pitch": 0.0, "duration": 0.0}
    for example in batch:
        mel_pred, pitch_pred, log_dur = teacher_forward(model, example)
        total, parts = synth_loss(mel_pred, example.mel_target,
                                  pitch_pred, example.grouped.pitch,
                                  log_dur, example.grouped.durations, weights)
        totals = total if totals is None else totals + total
        for key in parts_sum:
            parts_sum[key] += float(parts[key].data)
    scale = 1.0 / len(batch)
    loss = totals * scale
    parts = {key: value * scale for key, value in parts_sum.items()}
    parts["total"] = float(loss.data)
    for name, value in parts.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(name, value)
    loss.backward()
    optimizer.step()
    return parts


def make_optimizer(model: MelSynthesizer) -> Adam:
    members = list(model.named_parameters().items())
    return Adam([ParamGroup(SYNTH_GROUP, members, model.config.learning_rate)])


def train_synthesizer(examples, config: SynthesizerConfig, steps: int,
                      seed: int, batch_size: int = 8, log_every: int = 100,
                      log_fn=None):
    seq = np.random.SeedSequence(seed)
    init_rng, order_rng = [np.random.default_rng(s) for s in seq.spawn(2)]
    model = MelSynthesizer(config, init_rng)
    optimizer = make_optimizer(model)
    history = []
    started = time.monotonic()
    for step_idx in range(steps):
        idx = order_rng.choice(len(examples), size=batch_size,
                               replace=len(examples) < batch_size)
        parts = train_step_synth(model, optimizer, [examples[i] for i in idx])
        history.append(parts)
        if log_fn and (step_idx % log_every == 0 or step_idx == steps - 1):
            log_fn(f"step {step_idx:5d}  total {parts['total']:.4f}  "
                   f"mel {parts['mel']:.4f}  pitch {parts['pitch']:.4f}  "
                   f"dur {parts['duration']:.4f}  "
                   f"({time.monotonic() - started:.0f}s)")
    return model, optimizer, history


# ---------------------------------------------------------------------------
# persistence

KIND = "synthesizer"


def save_synthesizer(path, model: MelSynthesizer, config_text: str,
                     optimizer: Adam | None = None):
    write_container(path, KIND, config_text,
                    model_arrays(model, optimizer=optimizer))


def load_synthesizer(path, config: SynthesizerConfig | None = None):
    from .config import Config
    container = read_container(path, expect_kind=KIND)
    if config is None:
        config = Config.from_text(container.config_text).synthesizer_config()
    model = MelSynthesizer(config, np.random.default_rng(0))
    load_model_arrays(model, container.arrays)
    return model, container
