"""Waveform to magnitude-spectrogram pipeline and ratio-mask targets.

The default profile is 1 s of mono audio at 16 kHz analyzed with a
512-point FFT, a periodic Hann window of length 400 and a hop of 160.
Framing uses no center padding: the 96 full windows starting at
0, 160, ..., 95*160, and the 256 one-sided frequency bins 1..256 (DC
dropped), which makes the output shape exactly 96x256.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
N_FFT = 512
WIN_LENGTH = 400
HOP_LENGTH = 160
N_FRAMES = 96
N_BINS = 256
EPS_DIV = 1e-8


@dataclass(frozen=True)
class AudioProfile:
    sample_rate: int = SAMPLE_RATE
    n_fft: int = N_FFT
    win_length: int = WIN_LENGTH
    hop_length: int = HOP_LENGTH
    n_frames: int = N_FRAMES
    n_bins: int = N_BINS

    @property
    def n_samples(self) -> int:
        return self.sample_rate  # 1 s profile


DEFAULT_PROFILE = AudioProfile()


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def bin_of_frequency(freq_hz: float, profile: AudioProfile = DEFAULT_PROFILE) -> int:
    """One-sided rfft bin index closest to a frequency."""
    return int(round(freq_hz * profile.n_fft / profile.sample_rate))


def frequency_of_bin(bin_index: int, profile: AudioProfile = DEFAULT_PROFILE) -> float:
    return bin_index * profile.sample_rate / profile.n_fft


def stft_magnitude(samples: np.ndarray, rate: int = SAMPLE_RATE,
                   profile: AudioProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Magnitude spectrogram of a 1 s, 16 kHz waveform; shape (96, 256)."""
    samples = np.asarray(samples, dtype=np.float64)
    if rate != profile.sample_rate:
        raise ValueError(f"expected {profile.sample_rate} Hz audio, got {rate}")
    if samples.ndim != 1 or samples.size != profile.n_samples:
        raise ValueError(
            f"expected {profile.n_samples} mono samples, got shape {samples.shape}"
        )
    window = hann_window(profile.win_length)
    starts = np.arange(profile.n_frames) * profile.hop_length
    idx = starts[:, None] + np.arange(profile.win_length)[None, :]
    frames = samples[idx] * window
    spectrum = np.fft.rfft(frames, n=profile.n_fft, axis=1)
    return np.abs(spectrum[:, 1 : profile.n_bins + 1]).astype(np.float32)


def mix(a_i: np.ndarray, a_j: np.ndarray) -> np.ndarray:
    """Element-wise sum of two magnitude spectrograms."""
    a_i = np.asarray(a_i)
    a_j = np.asarray(a_j)
    if a_i.shape != a_j.shape:
        raise ValueError(f"shape mismatch {a_i.shape} vs {a_j.shape}")
    return a_i + a_j


def ratio_target(a_i: np.ndarray, a_p: np.ndarray) -> np.ndarray:
    """Ground-truth ratio mask a_i / (a_p + eps), clamped to [0, 1]."""
    a_i = np.asarray(a_i)
    a_p = np.asarray(a_p)
    if a_i.shape != a_p.shape:
        raise ValueError(f"shape mismatch {a_i.shape} vs {a_p.shape}")
    return np.clip(a_i / (a_p + EPS_DIV), 0.0, 1.0)


def read_wav_mono(path, profile: AudioProfile = DEFAULT_PROFILE) -> np.ndarray:
    """Read a PCM 16-bit mono WAV file into float samples in [-1, 1]."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError("only mono WAV input is supported")
        if wf.getsampwidth() != 2:
            raise ValueError("only PCM 16-bit WAV input is supported")
        if wf.getframerate() != profile.sample_rate:
            raise ValueError(f"expected {profile.sample_rate} Hz WAV input")
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
