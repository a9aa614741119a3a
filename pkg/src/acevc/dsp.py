"""Waveform ingestion and signal-processing primitives.

Everything downstream consumes 22050 Hz mono audio and log-mel frames
computed with a 1024-sample window and 256-sample hop. Framing is centered
(reflect padding) with T = ceil(len / hop), so mel frames, pitch frames,
and regulation bookkeeping all share one time base.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample, resample_poly

__all__ = [
    "SAMPLE_RATE", "N_FFT", "WIN_LENGTH", "HOP_LENGTH", "N_MELS",
    "Waveform", "MelSpectrogram", "PitchContour", "SpeakerPitchStats",
    "AudioReadError",
    "ingest_audio", "write_wav", "stft", "istft",
    "mel_filterbank", "mel_center_frequencies", "mel_spectrogram",
    "yin_pitch", "pitch_shift", "normalize_pitch", "speaker_pitch_stats",
    "griffin_lim",
]

SAMPLE_RATE = 22050
N_FFT = 1024
WIN_LENGTH = 1024
HOP_LENGTH = 256
N_MELS = 80
MEL_FMIN = 0.0
MEL_FMAX = 8000.0
LOG_FLOOR = 1e-5

YIN_FMIN = 50.0
YIN_FMAX = 800.0
YIN_THRESHOLD = 0.15
YIN_WINDOW = 1024

PITCH_STD_FLOOR_HZ = 1.0


class AudioReadError(RuntimeError):
    pass


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("zero-length audio")
        if not np.isfinite(samples).all():
            raise ValueError("non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelSpectrogram:
    """T x 80 matrix of natural-log mel magnitudes."""

    frames: np.ndarray
    hop_s: float = HOP_LENGTH / SAMPLE_RATE

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[1] != N_MELS or frames.shape[0] < 1:
            raise ValueError(f"mel frames must be Tx{N_MELS}, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise ValueError("non-finite mel frames")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class PitchContour:
    """Per-mel-frame fundamental frequency in Hz; 0 marks unvoiced frames."""

    f0: np.ndarray

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = f0[f0 > 0]
        if voiced.size and (voiced.min() < YIN_FMIN or voiced.max() > YIN_FMAX):
            raise ValueError("voiced pitch outside the tracker's search range")
        object.__setattr__(self, "f0", f0)

    def __len__(self):
        return self.f0.size

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.f0 > 0


@dataclass(frozen=True)
class SpeakerPitchStats:
    mean_hz: float
    std_hz: float

    def __post_init__(self):
        if self.std_hz <= 0:
            raise ValueError("pitch std must be positive")


# ---------------------------------------------------------------------------
# ingestion

def ingest_audio(path) -> Waveform:
    """Read a PCM WAV file: mono-mix, resample to 22050 Hz, bound peak at 1."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise AudioReadError(f"unreadable file: {path}")
    except Exception as exc:  # scipy raises bare ValueError on bad RIFF
        raise AudioReadError(f"unsupported encoding in {path}: {exc}")
    if data.size == 0:
        raise ValueError("zero-length audio")
    if not 8000 <= rate <= 48000:
        raise AudioReadError(f"unsupported sample rate {rate} Hz (need 8-48 kHz)")

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioReadError(f"unsupported sample format {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    if rate != SAMPLE_RATE:
        ratio = Fraction(SAMPLE_RATE, rate).limit_denominator(1000)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
    if samples.size == 0:
        raise ValueError("zero-length audio")
    peak = np.abs(samples).max()
    if peak > 1.0:
        samples = samples / peak
    return Waveform(samples, SAMPLE_RATE)


def write_wav(path, wave: Waveform):
    """Write 16-bit PCM mono WAV at the pipeline sample rate."""
    samples = np.clip(wave.samples, -1.0, 1.0)
    wavfile.write(path, wave.sample_rate, (samples * 32767.0).astype(np.int16))


# ---------------------------------------------------------------------------
# STFT plumbing shared by mel, pitch shift, and Griffin-Lim

@lru_cache(maxsize=1)
def _window() -> np.ndarray:
    return get_window("hann", WIN_LENGTH, fftbins=True)


def n_frames_for(n_samples: int) -> int:
    return int(np.ceil(n_samples / HOP_LENGTH))


def stft(samples: np.ndarray) -> np.ndarray:
    """Centered STFT; returns (T, 513) complex with T = ceil(len/hop)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < WIN_LENGTH:
        raise ValueError(f"waveform shorter than one window "
                         f"({x.size} < {WIN_LENGTH})")
    t = n_frames_for(x.size)
    half = N_FFT // 2
    padded = np.pad(x, (half, half), mode="reflect")
    s0 = padded.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(t, WIN_LENGTH), strides=(HOP_LENGTH * s0, s0))
    return np.fft.rfft(frames * _window(), n=N_FFT, axis=1)


def istft(spec: np.ndarray, length: int) -> np.ndarray:
    """Weighted overlap-add inverse of `stft`, trimmed to `length` samples."""
    t = spec.shape[0]
    win = _window()
    frames = np.fft.irfft(spec, n=N_FFT, axis=1) * win
    half = N_FFT // 2
    total = (t - 1) * HOP_LENGTH + N_FFT
    buf = np.zeros(total)
    norm = np.zeros(total)
    win_sq = win * win
    for i in range(t):
        start = i * HOP_LENGTH
        buf[start:start + N_FFT] += frames[i]
        norm[start:start + N_FFT] += win_sq
    good = norm > 1e-9
    buf[good] /= norm[good]
    out = buf[half:half + length]
    if out.size < length:
        out = np.pad(out, (0, length - out.size))
    return out


# ---------------------------------------------------------------------------
# mel features

def _hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3.0)
    log_region = f >= 1000.0
    mel = np.where(log_region,
                   15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / np.log(6.4) * 27.0,
                   mel)
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3.0)
    log_region = m >= 15.0
    f = np.where(log_region, 1000.0 * np.exp(np.log(6.4) * (m - 15.0) / 27.0), f)
    return f


@lru_cache(maxsize=1)
def _mel_edges() -> np.ndarray:
    mel_pts = np.linspace(_hz_to_mel(MEL_FMIN), _hz_to_mel(MEL_FMAX), N_MELS + 2)
    return _mel_to_hz(mel_pts)


@lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """(80, 513) triangular filterbank, area-normalized per band."""
    edges = _mel_edges()
    fft_freqs = np.arange(N_FFT // 2 + 1) * (SAMPLE_RATE / N_FFT)
    weights = np.zeros((N_MELS, fft_freqs.size))
    for i in range(N_MELS):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        weights[i] = np.maximum(0.0, np.minimum(up, down))
        weights[i] *= 2.0 / (hi - lo)
    return weights


def mel_center_frequencies() -> np.ndarray:
    return _mel_edges()[1:-1].copy()


def mel_spectrogram(wave: Waveform) -> MelSpectrogram:
    spec = stft(wave.samples)
    mel = np.abs(spec) @ mel_filterbank().T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)).astype(np.float32))


# ---------------------------------------------------------------------------
# pitch tracking (Yin: difference function, cumulative-mean normalization,
# absolute threshold, parabolic interpolation)

def yin_pitch(wave: Waveform,
              fmin: float = YIN_FMIN, fmax: float = YIN_FMAX,
              threshold: float = YIN_THRESHOLD) -> PitchContour:
    """Per-frame f0 aligned with the mel framing; 0 where unvoiced."""
    sr = wave.sample_rate
    x = wave.samples
    if x.size < WIN_LENGTH:
        raise ValueError(f"waveform shorter than one window "
                         f"({x.size} < {WIN_LENGTH})")
    tau_min = max(2, int(sr / fmax))
    tau_max = int(sr / fmin)
    w = YIN_WINDOW
    seg_len = w + tau_max + 1

    t = n_frames_for(x.size)
    half = N_FFT // 2
    pad_right = max(0, (t - 1) * HOP_LENGTH + seg_len - half - x.size)
    padded = np.pad(x, (half, pad_right), mode="reflect")
    s0 = padded.strides[0]
    segs = np.lib.stride_tricks.as_strided(
        padded, shape=(t, seg_len), strides=(HOP_LENGTH * s0, s0))

    # difference function d(tau) via FFT cross-correlation, batched over frames
    nfft = 1 << int(np.ceil(np.log2(seg_len + w)))
    spec_full = np.fft.rfft(segs, n=nfft, axis=1)
    spec_head = np.fft.rfft(segs[:, :w], n=nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), n=nfft, axis=1)[:, :tau_max + 1]
    sq = np.concatenate([np.zeros((t, 1)), np.cumsum(segs * segs, axis=1)], axis=1)
    energy = sq[:, w:w + tau_max + 1] - sq[:, :tau_max + 1]
    diff = energy[:, :1] + energy - 2.0 * corr
    diff[:, 0] = 0.0

    # cumulative mean normalized difference
    denom = np.cumsum(diff[:, 1:], axis=1)
    taus = np.arange(1, tau_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = np.where(denom > 0, diff[:, 1:] * taus / denom, 1.0)
    cmndf = np.concatenate([np.ones((t, 1)), cmndf], axis=1)

    f0 = np.zeros(t)
    for i in range(t):
        row = cmndf[i]
        below = np.nonzero(row[tau_min:tau_max + 1] < threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        if 0 < tau < tau_max:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom_p = a - 2.0 * b + c
            shift = 0.5 * (a - c) / denom_p if abs(denom_p) > 1e-12 else 0.0
            tau_refined = tau + np.clip(shift, -1.0, 1.0)
        else:
            tau_refined = float(tau)
        f0[i] = np.clip(sr / tau_refined, fmin, fmax)
    return PitchContour(f0)


# ---------------------------------------------------------------------------
# pitch shifting (phase-vocoder time stretch + resample back)

def _princarg(phase: np.ndarray) -> np.ndarray:
    return (phase + np.pi) % (2.0 * np.pi) - np.pi


def pitch_shift(wave: Waveform, semitones: float) -> Waveform:
    """Scale f0 by 2^(semitones/12); sample count is preserved exactly."""
    if abs(semitones) > 12:
        raise ValueError(f"shift of {semitones} semitones outside +/-12")
    factor = 2.0 ** (semitones / 12.0)
    x = wave.samples
    n = x.size
    spec = stft(x)
    n_in = spec.shape[0]
    mag = np.abs(spec)
    phase = np.angle(spec)

    stretched_len = int(round(n * factor))
    n_out = n_frames_for(stretched_len) + 2
    omega_hop = 2.0 * np.pi * np.arange(N_FFT // 2 + 1) * HOP_LENGTH / N_FFT

    out = np.empty((n_out, N_FFT // 2 + 1), dtype=np.complex128)
    acc = phase[0].copy()
    out[0] = spec[0]
    for m in range(1, n_out):
        # instantaneous frequency over the analysis interval just crossed
        prev_pos = min((m - 1) / factor, n_in - 1.0)
        a = min(int(prev_pos), n_in - 2)
        advance = _princarg(phase[a + 1] - phase[a] - omega_hop) + omega_hop
        acc = acc + advance
        pos = min(m / factor, n_in - 1.0)
        b = min(int(pos), n_in - 2)
        frac = pos - b
        interp_mag = (1.0 - frac) * mag[b] + frac * mag[b + 1]
        out[m] = interp_mag * np.exp(1j * acc)

    stretched = istft(out, stretched_len)
    shifted = resample(stretched, n)
    return Waveform(np.asarray(shifted, dtype=np.float64), wave.sample_rate)


# ---------------------------------------------------------------------------
# speaker pitch statistics

def speaker_pitch_stats(contours) -> SpeakerPitchStats:
    """Mean/std over voiced frames of a speaker's contours; std floored at 1 Hz."""
    voiced = np.concatenate([c.f0[c.voiced_mask] for c in contours]) \
        if contours else np.empty(0)
    if voiced.size == 0:
        raise ValueError("no voiced frames in any contour")
    mean = float(voiced.mean())
    std = float(voiced.std())
    return SpeakerPitchStats(mean, max(std, PITCH_STD_FLOOR_HZ))


def normalize_pitch(contour: PitchContour, stats: SpeakerPitchStats) -> np.ndarray:
    """Voiced frames -> (f0 - mean)/std; unvoiced frames stay 0."""
    voiced = contour.voiced_mask
    out = np.zeros(len(contour))
    out[voiced] = (contour.f0[voiced] - stats.mean_hz) / stats.std_hz
    return out


# ---------------------------------------------------------------------------
# Griffin-Lim inversion (vocoder substitute)

@lru_cache(maxsize=1)
def _mel_pinv() -> np.ndarray:
    return np.linalg.pinv(mel_filterbank())


def griffin_lim(mel: MelSpectrogram, iters: int = 60) -> Waveform:
    """Invert log-mel frames to a waveform via zero-phase Griffin-Lim."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    mel_mag = np.exp(mel.frames.astype(np.float64))
    lin_mag = np.maximum(mel_mag @ _mel_pinv().T, 0.0)
    length = mel.n_frames * HOP_LENGTH
    work_len = max(length, WIN_LENGTH)  # stft needs one full window
    angles = np.ones_like(lin_mag, dtype=np.complex128)
    for _ in range(iters):
        y = istft(lin_mag * angles, work_len)
        rebuilt = stft(y)[:lin_mag.shape[0]]
        mags = np.abs(rebuilt)
        angles = np.where(mags > 0, rebuilt / np.maximum(mags, 1e-30), 1.0)
    return Waveform(istft(lin_mag * angles, length), SAMPLE_RATE)
