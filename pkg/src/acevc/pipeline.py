"""End-to-end voice conversion: target-embedding estimation and
source -> target conversion through extractor, grouper, synthesizer, and
Griffin-Lim inversion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .grouper import group_content, segment_pitch
from .losses import ctc_greedy_decode
from .sre import SpeakerEmbedding

__all__ = ["PipelineError", "ConversionResult", "target_speaker_embedding",
           "convert"]


class PipelineError(RuntimeError):
    pass


@dataclass
class ConversionResult:
    wave: dsp.Waveform
    mel: dsp.MelSpectrogram
    report: dict

    def report_lines(self) -> str:
        lines = [f"{key}: {value}" for key, value in self.report.items()]
        return "\n".join(lines) + "\n"


def target_speaker_embedding(extractor, wave: dsp.Waveform,
                             min_seconds: float = 10.0,
                             slice_seconds: float = 2.0) -> SpeakerEmbedding:
    """Average per-slice embeddings over non-overlapping 2 s windows."""
    if wave.duration < min_seconds:
        raise PipelineError(f"need at least {min_seconds:.0f}s of target speech, "
                            f"got {wave.duration:.1f}s")
    slice_len = int(slice_seconds * wave.sample_rate)
    embeddings = []
    for start in range(0, len(wave) - slice_len + 1, slice_len):
        chunk = dsp.Waveform(wave.samples[start:start + slice_len],
                             wave.sample_rate)
        _, embedding = extractor.extract(dsp.mel_spectrogram(chunk))
        embeddings.append(embedding.vector)
    mean = np.mean(embeddings, axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0:
        raise PipelineError("degenerate target embedding")
    return SpeakerEmbedding((mean / norm).astype(np.float32))


def convert(extractor, synthesizer, source: dsp.Waveform,
            target: SpeakerEmbedding, mode: str = "mimic",
            griffin_lim_iters: int = 60,
            source_stats: dsp.SpeakerPitchStats | None = None) -> ConversionResult:
    """Re-render `source` in the target voice.

    mimic keeps the source's durations and (source-normalized) pitch shape;
    adaptive lets the synthesizer predict both for the target embedding.
    Source pitch is normalized with SOURCE-speaker statistics so identity
    enters only through the target embedding; without provided stats they
    are estimated from the source utterance itself.
    """
    if mode not in ("mimic", "adaptive"):
        raise PipelineError(f"unknown conversion mode {mode!r}")
    mel = dsp.mel_spectrogram(source)
    content, _source_embedding = extractor.extract(mel)

    decoded = ctc_greedy_decode(content.log_probs, blank=extractor.config.blank_id)
    if not decoded:
        raise PipelineError("no content detected")

    grouped = group_content(content)
    contour = dsp.yin_pitch(source)
    if source_stats is None:
        source_stats = dsp.speaker_pitch_stats([contour])
    normalized = dsp.normalize_pitch(contour, source_stats)
    grouped = grouped.with_pitch(segment_pitch(normalized, grouped.durations,
                                               synthesizer.config.subsample))

    mel_out = synthesizer.infer(grouped, target, mode)
    wave_out = dsp.griffin_lim(mel_out, iters=griffin_lim_iters)
    peak = np.abs(wave_out.samples).max()
    if peak > 1.0:
        wave_out = dsp.Waveform(wave_out.samples / peak, wave_out.sample_rate)

    report = {
        "mode": mode,
        "source_samples": len(source),
        "source_frames": mel.n_frames,
        "content_steps": int(grouped.total_steps),
        "groups": grouped.n_groups,
        "tokens": " ".join(str(t) for t in grouped.tokens),
        "durations": " ".join(str(d) for d in grouped.durations),
        "group_pitch": " ".join(f"{p:.3f}" for p in grouped.pitch),
        "source_pitch_mean_hz": f"{source_stats.mean_hz:.2f}",
        "source_pitch_std_hz": f"{source_stats.std_hz:.2f}",
        "output_frames": mel_out.n_frames,
        "output_samples": len(wave_out),
    }
    return ConversionResult(wave_out, mel_out, report)
