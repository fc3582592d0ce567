"""Time-domain audio carrier and 16-bit PCM WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

PCM_SCALE = 32767.0


@dataclass(frozen=True)
class AudioSignal:
    """A mono signal: float64 samples plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional (mono)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def energy(self) -> float:
        """Total sum-of-squares energy."""
        return float(np.dot(self.samples, self.samples))


def read_wav(path) -> AudioSignal:
    """Read a mono 16-bit little-endian PCM WAV file.

    Raises ValueError for any other encoding; samples are scaled to
    [-1, 1] by 1/32767.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise ValueError(f"{path}: expected mono, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise ValueError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise ValueError(f"{path}: not a valid WAV file: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioSignal(samples, rate)


def write_wav(path, signal: AudioSignal) -> None:
    """Write a mono 16-bit PCM WAV file, clipping samples to [-1, 1]."""
    clipped = np.clip(signal.samples, -1.0, 1.0)
    pcm = np.round(clipped * PCM_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate)
        wf.writeframes(pcm.tobytes())
