"""Delay-energy normalization of clean speech against its augmented twin.

The augmented signal trails the clean one by the direct-path propagation
delay and sits at a different level.  Normalization shifts the clean
signal by that exact delay and rescales it so the 95th percentile of its
frame energies matches the augmented signal's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal
from .room import ImagePath, RoomSpec

DEFAULT_FRAME_MS = 25.0
DEFAULT_HOP_MS = 10.0
DEFAULT_PERCENTILE = 95.0


@dataclass(frozen=True)
class DenResult:
    normalized_clean: AudioSignal
    applied_delay: int
    applied_gain: float


def frame_energies(signal: AudioSignal, frame_len: int, hop: int) -> np.ndarray:
    """Sum-of-squares energy of each full frame (frame_len window, hop step)."""
    if frame_len <= 0 or hop <= 0:
        raise ValueError("frame_len and hop must be positive")
    n = len(signal)
    if n < frame_len:
        raise ValueError(f"signal of {n} samples is shorter than one frame ({frame_len})")
    count = 1 + (n - frame_len) // hop
    x = signal.samples
    stride = x.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        x, shape=(count, frame_len), strides=(hop * stride, stride), writeable=False
    )
    return np.einsum("ij,ij->i", frames, frames)


def frame_energy_percentile(
    signal: AudioSignal, percentile: float, frame_len: int, hop: int
) -> float:
    """Percentile of per-frame energies, linearly interpolated between
    order statistics."""
    if not 0.0 < percentile <= 100.0:
        raise ValueError("percentile must lie in (0, 100]")
    if len(signal) == 0:
        raise ValueError("empty signal")
    energies = frame_energies(signal, frame_len, hop)
    return float(np.percentile(energies, percentile, method="linear"))


def _default_frames(sample_rate: int):
    frame_len = round(sample_rate * DEFAULT_FRAME_MS / 1000.0)
    hop = round(sample_rate * DEFAULT_HOP_MS / 1000.0)
    return frame_len, hop


def den_normalize(
    clean: AudioSignal,
    augmented: AudioSignal,
    direct: ImagePath,
    room: RoomSpec,
    percentile: float = DEFAULT_PERCENTILE,
) -> DenResult:
    """Shift and rescale the clean signal to line up with the augmented one.

    The delay is the direct-path tap delay ceil(d * f_s / c0); the gain
    matches the given percentile of frame energies.  The result is padded
    or cropped to the augmented signal's length.
    """
    if clean.sample_rate != augmented.sample_rate:
        raise ValueError("clean and augmented sample rates differ")
    if clean.sample_rate != room.sample_rate:
        raise ValueError("signal sample rate does not match the room")
    if direct.reflection_count != 0:
        raise ValueError("direct path must have zero reflections")

    delay = direct.delay_samples(room.sample_rate, room.speed_of_sound)
    n_out = len(augmented)
    shifted = np.zeros(n_out)
    span = min(len(clean), n_out - delay)
    if span > 0:
        shifted[delay:delay + span] = clean.samples[:span]

    frame_len, hop = _default_frames(room.sample_rate)
    shifted_sig = AudioSignal(shifted, clean.sample_rate)
    ref = frame_energy_percentile(augmented, percentile, frame_len, hop)
    own = frame_energy_percentile(shifted_sig, percentile, frame_len, hop)
    if own == 0.0:
        raise ValueError("clean signal has zero percentile energy; gain is undefined")
    gain = math.sqrt(ref / own)
    return DenResult(
        normalized_clean=AudioSignal(gain * shifted, clean.sample_rate),
        applied_delay=delay,
        applied_gain=gain,
    )
