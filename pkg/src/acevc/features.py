"""Turn manifest utterances into training examples for both stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .grouper import group_content, segment_pitch
from .sre import AsrExample, SvExample
from .synthesizer import SynthExample

__all__ = ["PreparedCorpus", "speaker_index", "prepare_extractor_examples",
           "prepare_synth_examples"]


@dataclass
class PreparedCorpus:
    asr: list
    sv: list
    speakers: list  # ordered speaker ids; index = classifier label


def speaker_index(utterances) -> list:
    return sorted({utt.speaker for utt in utterances})


def prepare_extractor_examples(utterances, vocab: str,
                               min_frames: int | None = None,
                               max_frames: int | None = None,
                               speakers=None) -> PreparedCorpus:
    """Load audio, compute mels, map transcripts to token ids.

    Utterances outside the configured frame bounds are dropped (the
    full-scale analog keeps 4-16 s utterances for the recognition task).
    """
    speakers = list(speakers) if speakers is not None else speaker_index(utterances)
    label_of = {speaker: i for i, speaker in enumerate(speakers)}
    asr, sv = [], []
    for utt in utterances:
        wave = dsp.ingest_audio(utt.path)
        mel = dsp.mel_spectrogram(wave)
        if min_frames is not None and mel.n_frames < min_frames:
            continue
        if max_frames is not None and mel.n_frames > max_frames:
            continue
        tokens = np.array([vocab.index(c) for c in utt.transcript], dtype=np.int64)
        asr.append(AsrExample(wave=wave, mel=mel, tokens=tokens))
        sv.append(SvExample(mel=mel, speaker=label_of[utt.speaker]))
    return PreparedCorpus(asr=asr, sv=sv, speakers=speakers)


def prepare_synth_examples(utterances, extractor, subsample: int = 4):
    """Extract grouped content, per-speaker-normalized pitch, and targets.

    Pitch statistics are computed per speaker over the given utterances;
    returns (examples, stats) with stats keyed by speaker id.
    """
    waves, mels, contours = [], [], []
    for utt in utterances:
        wave = dsp.ingest_audio(utt.path)
        waves.append(wave)
        mels.append(dsp.mel_spectrogram(wave))
        contours.append(dsp.yin_pitch(wave))

    stats = {}
    by_speaker: dict = {}
    for utt, contour in zip(utterances, contours):
        by_speaker.setdefault(utt.speaker, []).append(contour)
    for speaker, speaker_contours in by_speaker.items():
        stats[speaker] = dsp.speaker_pitch_stats(speaker_contours)

    examples = []
    for utt, mel, contour in zip(utterances, mels, contours):
        content, embedding = extractor.extract(mel)
        grouped = group_content(content)
        normalized = dsp.normalize_pitch(contour, stats[utt.speaker])
        grouped = grouped.with_pitch(
            segment_pitch(normalized, grouped.durations, subsample))
        target_rows = subsample * grouped.total_steps
        mel_target = mel.frames[:target_rows]
        examples.append(SynthExample(grouped=grouped,
                                     speaker=embedding.vector,
                                     mel_target=mel_target))
    return examples, stats
