"""MFCC extraction: truncation, framing, mel filterbank, cepstra.

Clips are truncated to the first 1.5 s (where the wake word sits) before
feature extraction. The pipeline is pre-emphasis, rectangular framing,
magnitude spectrum, mel filterbank energies, log, orthonormal DCT-II,
sinusoidal liftering, and log-energy substitution in coefficient 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio import AudioClip
from .errors import ClipTooShortError, FeatureError, FilterbankConfigError, SampleRateError

# Clips are rejected at feature time (not ingest time) when the recording
# rate differs from the 16 kHz the pipeline is tuned for.
EXPECTED_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class MfccParams:
    window_length: float = 0.025
    window_step: float = 0.010
    n_filters: int = 26
    n_cepstra: int = 13
    fft_size: int = 512
    pre_emphasis: float = 0.97
    lifter: float = 22.0
    energy_floor: float = 1e-30
    max_duration: float = 1.5

    def validate(self, sample_rate: int) -> None:
        if not 0 < self.window_step <= self.window_length:
            raise FeatureError(f"require 0 < window_step <= window_length, got step={self.window_step} length={self.window_length}")
        if self.n_cepstra > self.n_filters:
            raise FeatureError(f"n_cepstra ({self.n_cepstra}) must not exceed n_filters ({self.n_filters})")
        if self.fft_size < self.window_length * sample_rate:
            raise FeatureError(f"fft_size ({self.fft_size}) smaller than the {self.frame_length(sample_rate)}-sample window")
        if self.energy_floor <= 0:
            raise FeatureError("energy_floor must be positive")
        if self.max_duration <= 0:
            raise FeatureError("max_duration must be positive")

    def frame_length(self, sample_rate: int) -> int:
        return int(round(self.window_length * sample_rate))

    def frame_step(self, sample_rate: int) -> int:
        return int(round(self.window_step * sample_rate))


@dataclass
class MfccMatrix:
    """L x 13 cepstral sequence for one clip; rows are time steps."""

    clip_id: str
    frames: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def truncate(clip: AudioClip, max_duration: float = MfccParams.max_duration) -> AudioClip:
    """Keep at most the first max_duration seconds; shorter clips pass through."""
    if max_duration <= 0:
        raise FeatureError("max_duration must be positive")
    limit = int(round(max_duration * clip.sample_rate))
    if len(clip.samples) <= limit:
        return clip
    return AudioClip(id=clip.id, sample_rate=clip.sample_rate, samples=clip.samples[:limit])


def frame_count(n_samples: int, sample_rate: int, params: MfccParams = MfccParams()) -> int:
    """Number of analysis frames: 1 + floor((N - window) / step)."""
    length = params.frame_length(sample_rate)
    step = params.frame_step(sample_rate)
    if n_samples < length:
        raise ClipTooShortError(f"{n_samples} samples is shorter than one {length}-sample window")
    return 1 + (n_samples - length) // step


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_points(n_filters: int, sample_rate: int, f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """The n_filters + 2 filter edge/center frequencies in Hz, equally spaced on the mel axis."""
    if f_max is None:
        f_max = sample_rate / 2.0
    if f_max > sample_rate / 2.0:
        raise FeatureError(f"f_max ({f_max}) above Nyquist ({sample_rate / 2.0})")
    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2)
    return mel_to_hz(mels)


def mel_filterbank(
    n_filters: int,
    fft_size: int,
    sample_rate: int,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank as an (n_filters, fft_size//2 + 1) weight matrix.

    Filter centers are equally spaced on the mel axis between f_min and
    f_max. Raises FilterbankConfigError when the FFT resolution cannot
    give every filter at least one positive weight.
    """
    points_hz = mel_points(n_filters, sample_rate, f_min, f_max)
    bins = np.floor((fft_size + 1) * points_hz / sample_rate).astype(int)
    weights = np.zeros((n_filters, fft_size // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            weights[j, i] = (i - left) / (center - left)
        for i in range(center, right):
            weights[j, i] = (right - i) / (right - center)
    empty = [j for j in range(n_filters) if not (weights[j] > 0).any()]
    if empty:
        raise FilterbankConfigError(
            f"{len(empty)} of {n_filters} filters have no positive weight at fft_size={fft_size} "
            f"(first empty filter index {empty[0]}); reduce n_filters or raise fft_size"
        )
    return weights


def pre_emphasize(samples: np.ndarray, coefficient: float) -> np.ndarray:
    """y[t] = x[t] - coefficient * x[t-1], first sample passed through."""
    samples = np.asarray(samples, dtype=np.float64)
    if coefficient == 0:
        return samples.copy()
    return np.concatenate(([samples[0]], samples[1:] - coefficient * samples[:-1]))


def frame_signal(samples: np.ndarray, frame_length: int, frame_step: int) -> np.ndarray:
    """Slice a signal into overlapping frames, no padding; drops the tail remainder."""
    if len(samples) < frame_length:
        raise ClipTooShortError(f"{len(samples)} samples is shorter than one {frame_length}-sample window")
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_length)
    return windows[::frame_step].copy()


def magnitude_spectrum(frames: np.ndarray, fft_size: int) -> np.ndarray:
    """Per-frame one-sided DFT magnitudes, shape (L, fft_size//2 + 1)."""
    return np.abs(np.fft.rfft(frames, n=fft_size, axis=-1))


def compute_mfcc(clip: AudioClip, params: MfccParams = MfccParams()) -> MfccMatrix:
    """Extract the MFCC sequence for one clip (already truncated by caller policy)."""
    if clip.sample_rate != EXPECTED_SAMPLE_RATE:
        raise SampleRateError(f"clip {clip.id!r}: sample rate {clip.sample_rate}, expected {EXPECTED_SAMPLE_RATE}")
    params.validate(clip.sample_rate)
    length = params.frame_length(clip.sample_rate)
    step = params.frame_step(clip.sample_rate)
    n_frames = frame_count(len(clip.samples), clip.sample_rate, params)

    emphasized = pre_emphasize(clip.samples, params.pre_emphasis)
    frames = frame_signal(emphasized, length, step)
    assert frames.shape[0] == n_frames

    magnitudes = magnitude_spectrum(frames, params.fft_size)
    power = magnitudes**2 / params.fft_size
    energy = np.maximum(power.sum(axis=1), params.energy_floor)

    filterbank = mel_filterbank(params.n_filters, params.fft_size, clip.sample_rate)
    energies = np.maximum(power @ filterbank.T, params.energy_floor)
    cepstra = dct(np.log(energies), type=2, norm="ortho", axis=1)[:, : params.n_cepstra]

    if params.lifter > 0:
        n = np.arange(params.n_cepstra)
        cepstra = cepstra * (1.0 + (params.lifter / 2.0) * np.sin(np.pi * n / params.lifter))
    cepstra[:, 0] = np.log(energy)

    if not np.all(np.isfinite(cepstra)):
        raise FeatureError(f"clip {clip.id!r}: non-finite coefficients (corrupt samples?)")
    return MfccMatrix(clip_id=clip.id, frames=cepstra)
