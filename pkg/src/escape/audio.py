"""Reading and writing the 16-bit PCM mono WAV clips stored in an archive."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError

# Scale used in both directions: int16 sample / 32768 -> float in [-1, 1).
PCM_SCALE = 32768.0


@dataclass
class AudioClip:
    """Mono audio with amplitudes in [-1, 1]."""

    id: str
    sample_rate: int
    samples: np.ndarray

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def read_wav(path: str | Path, clip_id: str | None = None) -> AudioClip:
    """Read a 16-bit PCM mono WAV file into an AudioClip.

    Samples are scaled to [-1, 1] by dividing by 32768. Anything that is
    not uncompressed 16-bit mono is rejected rather than converted.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: unsupported codec {wav.getcomptype()!r}, expected PCM")
            if wav.getnchannels() != 1:
                raise AudioFormatError(f"{path}: {wav.getnchannels()} channels, expected mono")
            if wav.getsampwidth() != 2:
                raise AudioFormatError(f"{path}: {8 * wav.getsampwidth()}-bit samples, expected 16-bit")
            n_frames = wav.getnframes()
            data = wav.readframes(n_frames)
            sample_rate = wav.getframerate()
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated WAV header") from exc
    if len(data) < 2 * n_frames:
        raise AudioFormatError(f"{path}: truncated audio data ({len(data)} bytes for {n_frames} frames)")
    if n_frames == 0:
        raise AudioFormatError(f"{path}: empty audio stream")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioClip(id=clip_id if clip_id is not None else path.stem, sample_rate=sample_rate, samples=samples)


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write an AudioClip as 16-bit PCM mono WAV.

    Exact inverse of read_wav for content that originated as int16.
    """
    ints = np.clip(np.rint(clip.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(clip.sample_rate)
        wav.writeframes(ints.tobytes())
