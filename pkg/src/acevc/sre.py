"""Speech representation extractor: conformer-lite backbone with 4x
temporal subsampling, a content head trained with CTC, a speaker head
trained with angular softmax, and the Siamese disentanglement step."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dsp
from .losses import (SreLossWeights, cosine_disentangle_loss, ctc_loss,
                     angular_softmax_loss, sre_loss)
from .nn import (Adam, Conv1d, LayerNorm, Linear, Module, ModuleList,
                 MultiHeadSelfAttention, FeedForward, NonFiniteLossError,
                 Tensor, groups_from_model, log_softmax, stack)
from .nn.checkpoint import (load_model_arrays, model_arrays, read_container,
                            write_container)

__all__ = [
    "ExtractorConfig", "ContentSequence", "SpeakerEmbedding",
    "RepresentationExtractor", "AsrExample", "SvExample",
    "train_step", "train_extractor", "save_extractor", "load_extractor",
]

BACKBONE = "backbone"
HEADS = "heads"


@dataclass(frozen=True)
class ExtractorConfig:
    mel_bands: int = 80
    subsample: int = 4          # one content step spans 4 mel frames (~46 ms)
    width: int = 128
    blocks: int = 2
    heads: int = 4
    conv_kernel: int = 7
    ffn_mult: int = 2
    content_dim: int = 64
    speaker_dim: int = 64
    vocab_size: int = 6         # includes the CTC blank (last id)
    n_speakers: int = 8
    lr_backbone: float = 1e-5
    lr_heads: float = 1e-4

    def __post_init__(self):
        if self.subsample != 4:
            raise ValueError("subsample factor is fixed at 4")
        if self.vocab_size < 2:
            raise ValueError("vocabulary must hold at least one token plus blank")

    @property
    def blank_id(self) -> int:
        return self.vocab_size - 1

    @property
    def learning_rates(self) -> dict:
        return {BACKBONE: self.lr_backbone, HEADS: self.lr_heads}


@dataclass(frozen=True)
class ContentSequence:
    """Per-step content embeddings plus token log-probabilities."""

    vectors: np.ndarray    # (T', D_c)
    log_probs: np.ndarray  # (T', V), rows log-softmax normalized

    def __post_init__(self):
        if self.vectors.shape[0] != self.log_probs.shape[0]:
            raise ValueError("content vectors and log_probs must align")


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Unit-norm utterance-level voice identity vector."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector)
        norm = float(np.linalg.norm(vec))
        if not 1 - 1e-5 <= norm <= 1 + 1e-5:
            raise ValueError(f"speaker embedding norm {norm:.6f} is not 1")
        object.__setattr__(self, "vector", vec)


class ConformerLiteBlock(Module):
    """Self-attention, convolution, and feed-forward sublayers with
    pre-norm residual connections."""

    def __init__(self, dim, heads, kernel, ffn_mult, group, rng, dtype=np.float32):
        super().__init__()
        self.norm_attn = LayerNorm(dim, group, dtype=dtype)
        self.attn = MultiHeadSelfAttention(dim, heads, group, rng, dtype=dtype)
        self.norm_conv = LayerNorm(dim, group, dtype=dtype)
        self.conv = Conv1d(dim, dim, kernel, group, rng, dtype=dtype)
        self.norm_ffn = LayerNorm(dim, group, dtype=dtype)
        self.ffn = FeedForward(dim, ffn_mult, group, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm_attn(x))
        x = x + self.conv(self.norm_conv(x)).gelu()
        x = x + self.ffn(self.norm_ffn(x))
        return x


class RepresentationExtractor(Module):
    def __init__(self, config: ExtractorConfig, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.config = config
        c = config
        # kernel 8 / stride 4 / pad 2 yields exactly floor(T/4) steps
        self.subsampler = Conv1d(c.mel_bands, c.width, kernel=8, stride=4,
                                 padding=2, group=BACKBONE, rng=rng, dtype=dtype)
        self.blocks = ModuleList([
            ConformerLiteBlock(c.width, c.heads, c.conv_kernel, c.ffn_mult,
                               BACKBONE, rng, dtype=dtype)
            for _ in range(c.blocks)
        ])
        self.norm_out = LayerNorm(c.width, BACKBONE, dtype=dtype)
        self.content_proj = Linear(c.width, c.content_dim, HEADS, rng, dtype=dtype)
        self.content_vocab = Linear(c.content_dim, c.vocab_size, HEADS, rng,
                                    dtype=dtype)
        self.speaker_proj = Linear(c.width, c.speaker_dim, HEADS, rng, dtype=dtype)
        # angular softmax scores against normalized class rows; no bias
        self.speaker_cls = Linear(c.speaker_dim, c.n_speakers, HEADS, rng,
                                  bias=False, dtype=dtype)

    # -- forward pieces -------------------------------------------------

    def encode(self, mel_frames) -> Tensor:
        """Mel (T, 80) -> backbone encoding (floor(T/4), width)."""
        frames = np.asarray(mel_frames, dtype=self.dtype)
        if frames.ndim != 2 or frames.shape[1] != self.config.mel_bands:
            raise ValueError(f"expected (T, {self.config.mel_bands}) mel frames")
        if frames.shape[0] < self.config.subsample:
            raise ValueError(f"need at least {self.config.subsample} mel frames, "
                             f"got {frames.shape[0]}")
        x = self.subsampler(Tensor(frames)).gelu()
        for block in self.blocks:
            x = block(x)
        return self.norm_out(x)

    def content_head(self, encoding: Tensor):
        content = self.content_proj(encoding)
        log_probs = log_softmax(self.content_vocab(content), axis=-1)
        return content, log_probs

    def speaker_head(self, encoding: Tensor):
        first = encoding[0:1]  # embedding depends on the first step only
        raw = self.speaker_proj(first)
        norm = ((raw * raw).sum(axis=-1, keepdims=True) + 1e-12).sqrt()
        unit = raw / norm
        embedding = unit.reshape(self.config.speaker_dim)
        logits = self.speaker_cls(unit).reshape(self.config.n_speakers)
        return embedding, logits

    def extract(self, mel: dsp.MelSpectrogram):
        """Inference pass returning numpy content + speaker representations."""
        encoding = self.encode(mel.frames)
        content, log_probs = self.content_head(encoding)
        embedding, _ = self.speaker_head(encoding)
        return (ContentSequence(content.data.copy(), log_probs.data.copy()),
                SpeakerEmbedding(embedding.data.copy()))


# ---------------------------------------------------------------------------
# training

@dataclass
class AsrExample:
    wave: dsp.Waveform
    mel: dsp.MelSpectrogram
    tokens: np.ndarray  # non-blank token ids


@dataclass
class SvExample:
    mel: dsp.MelSpectrogram
    speaker: int


def _sv_crop(frames: np.ndarray, crop: int, rng: np.random.Generator) -> np.ndarray:
    t = frames.shape[0]
    if t >= crop:
        start = int(rng.integers(0, t - crop + 1))
        return frames[start:start + crop]
    start = int(rng.integers(0, t))
    rolled = np.roll(frames, -start, axis=0)
    reps = int(np.ceil(crop / t))
    return np.tile(rolled, (reps, 1))[:crop]


def train_step(model: RepresentationExtractor, optimizer: Adam,
               asr_batch, sv_batch, weights: SreLossWeights,
               shift_rng: np.random.Generator,
               shift_range=(1.0, 4.0), crop_rng=None, sv_crop_frames=172):
    """One combined multi-task update.

    CTC on the ASR batch, angular softmax on 2-second SV crops, and the
    Siamese cosine loss between each ASR utterance and its pitch-shifted
    copy. A single backward pass feeds one Adam step over both groups.
    """
    cfg = model.config
    model.zero_grad()

    content_losses = []
    disentangle_losses = []
    for example in asr_batch:
        encoding = model.encode(example.mel.frames)
        content, log_probs = model.content_head(encoding)
        content_losses.append(ctc_loss(log_probs, example.tokens,
                                       blank=cfg.blank_id))
        if weights.beta > 0:
            semitones = float(shift_rng.uniform(*shift_range))
            if shift_rng.integers(0, 2):
                semitones = -semitones
            shifted = dsp.pitch_shift(example.wave, semitones)
            shifted_mel = dsp.mel_spectrogram(shifted)
            enc_shifted = model.encode(shifted_mel.frames)
            content_shifted, _ = model.content_head(enc_shifted)
            disentangle_losses.append(
                cosine_disentangle_loss(content, content_shifted))

    embeddings = []
    labels = []
    for example in sv_batch:
        crop = _sv_crop(example.mel.frames, sv_crop_frames,
                        crop_rng if crop_rng is not None else shift_rng)
        encoding = model.encode(crop)
        embedding, _ = model.speaker_head(encoding)
        embeddings.append(embedding)
        labels.append(example.speaker)

    l_content = _mean_of(content_losses)
    l_sv = angular_softmax_loss(stack(embeddings), labels,
                                model.speaker_cls.weight.transpose(1, 0))
    l_dis = _mean_of(disentangle_losses) if disentangle_losses else Tensor(
        np.zeros((), dtype=model.dtype))
    total = sre_loss(l_content, l_sv, l_dis, weights)

    parts = {"content": float(l_content.data), "sv": float(l_sv.data),
             "disentangle": float(l_dis.data), "total": float(total.data)}
    for name, value in parts.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(name, value)
    total.backward()
    optimizer.step()
    return parts


def _mean_of(losses):
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    return total * (1.0 / len(losses))


def make_optimizer(model: RepresentationExtractor) -> Adam:
    return Adam(groups_from_model(model, model.config.learning_rates))


def train_extractor(asr_examples, sv_examples, config: ExtractorConfig,
                    weights: SreLossWeights, steps: int, seed: int,
                    batch_asr: int = 8, batch_sv: int = 16,
                    shift_range=(1.0, 4.0), sv_crop_frames: int = 172,
                    log_every: int = 50, log_fn=None):
    """Train from random init on prepared examples; returns (model, optimizer,
    history list of per-step loss dicts)."""
    seq = np.random.SeedSequence(seed)
    init_rng, order_rng, shift_rng, crop_rng = \
        [np.random.default_rng(s) for s in seq.spawn(4)]
    model = RepresentationExtractor(config, init_rng)
    optimizer = make_optimizer(model)
    history = []
    started = time.monotonic()
    for step_idx in range(steps):
        asr_idx = order_rng.choice(len(asr_examples), size=batch_asr,
                                   replace=len(asr_examples) < batch_asr)
        sv_idx = order_rng.choice(len(sv_examples), size=batch_sv,
                                  replace=len(sv_examples) < batch_sv)
        parts = train_step(model, optimizer,
                           [asr_examples[i] for i in asr_idx],
                           [sv_examples[i] for i in sv_idx],
                           weights, shift_rng, shift_range=shift_range,
                           crop_rng=crop_rng, sv_crop_frames=sv_crop_frames)
        history.append(parts)
        if log_fn and (step_idx % log_every == 0 or step_idx == steps - 1):
            log_fn(f"step {step_idx:5d}  total {parts['total']:.4f}  "
                   f"content {parts['content']:.4f}  sv {parts['sv']:.4f}  "
                   f"dis {parts['disentangle']:.4f}  "
                   f"({time.monotonic() - started:.0f}s)")
    return model, optimizer, history


# ---------------------------------------------------------------------------
# persistence

KIND = "extractor"


def save_extractor(path, model: RepresentationExtractor, config_text: str,
                   optimizer: Adam | None = None):
    write_container(path, KIND, config_text,
                    model_arrays(model, optimizer=optimizer))


def load_extractor(path, config: ExtractorConfig | None = None):
    """Rebuild an extractor from a checkpoint. Returns (model, container)."""
    from .config import Config  # deferred: config knows how to parse itself
    container = read_container(path, expect_kind=KIND)
    if config is None:
        config = Config.from_text(container.config_text).extractor_config()
    model = RepresentationExtractor(config, np.random.default_rng(0))
    load_model_arrays(model, container.arrays)
    return model, container
