"""Dataset layer: synthetic multi-speaker toy corpus plus manifest IO.

The generator renders token strings as a harmonic source (per-speaker f0
with light vibrato) shaped by per-token formant filters and a mild
per-speaker timbre filter. Speakers are spread across distinct pitch
registers and speaking rates so conversion runs have something to move.
Everything is deterministic per seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import iirpeak, lfilter

from . import dsp

__all__ = [
    "VOCAB", "TOKEN_FORMANTS", "ToySpeakerSpec", "Utterance", "ManifestError",
    "toy_speaker_specs", "render_utterance", "generate_toy_corpus",
    "load_manifest", "split_manifest",
]

VOCAB = "abcde"

# per-token resonances (Hz): distinct two-formant patterns
TOKEN_FORMANTS = {
    "a": (780.0, 1150.0),
    "b": (400.0, 2100.0),
    "c": (620.0, 1720.0),
    "d": (320.0, 2600.0),
    "e": (1000.0, 1450.0),
}

F0_LOW = 100.0
F0_HIGH = 310.0
RATE_SLOW = 1.25   # duration multiplier of the slowest speaker
RATE_FAST = 0.80


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ToySpeakerSpec:
    """Voice parameters of one synthetic speaker.

    `rate` multiplies every token duration, so rate > 1 speaks slower.
    """

    speaker_id: str
    base_f0: float
    f0_jitter: float
    formant1: float
    formant2: float
    rate: float

    def __post_init__(self):
        if not 90.0 <= self.base_f0 <= 320.0:
            raise ValueError(f"base f0 {self.base_f0} outside [90, 320] Hz")
        for f in (self.formant1, self.formant2):
            if not 300.0 <= f <= 3500.0:
                raise ValueError(f"timbre formant {f} outside [300, 3500] Hz")


@dataclass(frozen=True)
class Utterance:
    path: str
    transcript: str
    speaker: str
    duration: float


def toy_speaker_specs(n_speakers: int, seed: int) -> list:
    """Deterministic speaker table: f0 ascending, speaking rate descending."""
    if n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    f0s = np.linspace(F0_LOW, F0_HIGH, n_speakers)
    if np.diff(f0s).min() < 15.0:
        raise ValueError(f"{n_speakers} speakers cannot keep 15 Hz f0 spacing")
    rates = np.linspace(RATE_SLOW, RATE_FAST, n_speakers)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0,)))
    specs = []
    for i in range(n_speakers):
        specs.append(ToySpeakerSpec(
            speaker_id=f"spk{i}",
            base_f0=float(f0s[i]),
            f0_jitter=float(rng.uniform(0.005, 0.015)),
            formant1=float(rng.uniform(450.0, 700.0)),
            formant2=float(rng.uniform(2200.0, 3000.0)),
            rate=float(rates[i]),
        ))
    return specs


def _harmonic_source(rng, f0_hz: float, jitter: float, n: int, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    vibrato_phase = rng.uniform(0.0, 2.0 * np.pi)
    f0_t = f0_hz * (1.0 + jitter * np.sin(2.0 * np.pi * 5.0 * t + vibrato_phase))
    phase = 2.0 * np.pi * np.cumsum(f0_t) / sr
    n_harmonics = max(1, min(40, int(7800.0 / f0_hz)))
    k = np.arange(1, n_harmonics + 1)
    return (np.sin(np.outer(k, phase)) / k[:, None]).sum(axis=0)


def _resonate(x: np.ndarray, freq: float, q: float, sr: int) -> np.ndarray:
    b, a = iirpeak(freq, q, fs=sr)
    return lfilter(b, a, x)


def render_utterance(tokens: str, spec: ToySpeakerSpec, rng,
                     token_ms=(120.0, 250.0), gap_ms: float = 40.0,
                     sr: int = dsp.SAMPLE_RATE) -> np.ndarray:
    """Render one token string in a speaker's voice."""
    pieces = []
    gap = np.zeros(int(gap_ms * spec.rate / 1000.0 * sr))
    for i, token in enumerate(tokens):
        if token not in TOKEN_FORMANTS:
            raise ValueError(f"token {token!r} has no formant pattern")
        dur_s = rng.uniform(*token_ms) / 1000.0 * spec.rate
        n = max(32, int(dur_s * sr))
        source = _harmonic_source(rng, spec.base_f0, spec.f0_jitter, n, sr)
        f1, f2 = TOKEN_FORMANTS[token]
        shaped = _resonate(source, f1, 5.0, sr) + _resonate(source, f2, 5.0, sr)
        ramp = min(int(0.010 * sr), n // 4)
        envelope = np.ones(n)
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        envelope[:ramp] = fade
        envelope[-ramp:] = fade[::-1]
        pieces.append(shaped * envelope)
        if i < len(tokens) - 1:
            pieces.append(gap)
    utt = np.concatenate(pieces)
    utt = _resonate(utt, spec.formant1, 1.5, sr) + \
        0.7 * _resonate(utt, spec.formant2, 1.5, sr) + 0.3 * utt
    peak = np.abs(utt).max()
    return 0.9 * utt / peak if peak > 0 else utt


def generate_toy_corpus(out_dir, n_speakers: int = 8, utts_per_speaker: int = 30,
                        seed: int = 0, tokens_min: int = 6, tokens_max: int = 12,
                        token_ms=(120.0, 250.0), gap_ms: float = 40.0):
    """Write WAVs plus manifest.txt and speakers.txt; returns manifest path."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    specs = toy_speaker_specs(n_speakers, seed)

    lines = []
    for spk_idx, spec in enumerate(specs):
        for utt_idx in range(utts_per_speaker):
            rng = np.random.default_rng(np.random.SeedSequence(
                entropy=seed, spawn_key=(1, spk_idx, utt_idx)))
            n_tokens = int(rng.integers(tokens_min, tokens_max + 1))
            tokens = []
            for _ in range(n_tokens):
                choices = [c for c in VOCAB if not tokens or c != tokens[-1]]
                tokens.append(choices[int(rng.integers(0, len(choices)))])
            transcript = "".join(tokens)
            samples = render_utterance(transcript, spec, rng,
                                       token_ms=token_ms, gap_ms=gap_ms)
            name = f"{spec.speaker_id}_utt{utt_idx:03d}.wav"
            dsp.write_wav(wav_dir / name, dsp.Waveform(samples))
            duration = samples.size / dsp.SAMPLE_RATE
            lines.append(f"wav/{name}|{transcript}|{spec.speaker_id}|{duration:.3f}")

    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    table = out_dir / "speakers.txt"
    table.write_text("\n".join(
        f"{s.speaker_id}|{s.base_f0:.2f}|{s.rate:.3f}|{s.formant1:.1f}|"
        f"{s.formant2:.1f}|{s.f0_jitter:.4f}" for s in specs) + "\n")
    return manifest


def load_manifest(path, vocab: str = VOCAB, speakers=None,
                  min_duration: float | None = None,
                  max_duration: float | None = None) -> list:
    """Parse and validate manifest records; apply the duration filter.

    Records are `path|transcript|speaker|duration`, paths relative to the
    manifest's directory. Errors carry the 1-based line number.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    utterances = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) != 4:
            raise ManifestError(f"line {lineno}: expected 4 |-separated fields")
        rel, transcript, speaker, dur_text = fields
        audio_path = base / rel
        if not audio_path.is_file():
            raise ManifestError(f"line {lineno}: missing audio file {audio_path}")
        bad = set(transcript) - set(vocab)
        if bad:
            raise ManifestError(f"line {lineno}: out-of-vocabulary token(s) "
                                f"{sorted(bad)}")
        if speakers is not None and speaker not in speakers:
            raise ManifestError(f"line {lineno}: unknown speaker {speaker!r}")
        try:
            duration = float(dur_text)
        except ValueError:
            raise ManifestError(f"line {lineno}: bad duration {dur_text!r}")
        if min_duration is not None and duration < min_duration:
            continue
        if max_duration is not None and duration > max_duration:
            continue
        utterances.append(Utterance(str(audio_path), transcript, speaker, duration))
    return utterances


def split_manifest(utterances, eval_per_speaker: int):
    """Deterministic split: the last N utterances of each speaker (by path)
    are held out. Train and held-out ids are disjoint by construction."""
    by_speaker: dict = {}
    for utt in sorted(utterances, key=lambda u: u.path):
        by_speaker.setdefault(utt.speaker, []).append(utt)
    train, held_out = [], []
    for speaker in sorted(by_speaker):
        utts = by_speaker[speaker]
        if eval_per_speaker >= len(utts):
            raise ValueError(f"speaker {speaker} has only {len(utts)} utterances, "
                             f"cannot hold out {eval_per_speaker}")
        train.extend(utts[:-eval_per_speaker])
        held_out.extend(utts[-eval_per_speaker:])
    return train, held_out
