"""Power-mel feature frontend.

40 mel filterbank energies per 25 ms frame (10 ms hop), compressed by a
power-law nonlinearity with exponent 1/15 instead of a logarithm.  Mel
spacing follows the HTK formula 2595 * log10(1 + f / 700) with triangular
filters spanning 0 Hz to Nyquist; the window is a periodic Hann.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal

ROLE_CLEAN = "clean"
ROLE_AUGMENTED = "augmented"
ROLE_ENHANCED = "enhanced"
ROLE_COMBINED = "combined"
ROLES = frozenset({ROLE_CLEAN, ROLE_AUGMENTED, ROLE_ENHANCED, ROLE_COMBINED})

MAGIC = b"NEF1"


@dataclass(frozen=True)
class FeatureConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    num_mel: int = 40
    power_exponent: float = 1.0 / 15.0
    fft_size: int = 512
    floor_epsilon: float = 1e-10

    def __post_init__(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window and hop must be positive")
        if self.num_mel < 1:
            raise ValueError("need at least one mel band")
        if not 0.0 < self.power_exponent <= 1.0:
            raise ValueError("power exponent must lie in (0, 1]")
        if self.floor_epsilon <= 0:
            raise ValueError("floor epsilon must be positive")

    def window_samples(self, sample_rate: int) -> int:
        return round(sample_rate * self.window_ms / 1000.0)

    def hop_samples(self, sample_rate: int) -> int:
        return round(sample_rate * self.hop_ms / 1000.0)


@dataclass(frozen=True)
class FeatureSequence:
    """frames x num_mel matrix of non-negative power-mel values."""

    frames: np.ndarray
    role: str

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError("feature frames must be a 2-D matrix")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature frames contain non-finite values")
        if np.any(frames < 0):
            raise ValueError("feature frames must be non-negative")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {sorted(ROLES)}")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_mel(self) -> int:
        return self.frames.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_mel: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters over rfft bins, peak 1, 0 Hz to Nyquist.

    Adjacent filters are linear in Hz and sum to 1 inside each overlap
    region.
    """
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), num_mel + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)

    fb = np.zeros((num_mel, bin_freqs.shape[0]))
    for j in range(num_mel):
        left, center, right = hz_points[j], hz_points[j + 1], hz_points[j + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def num_frames_for(n_samples: int, window: int, hop: int) -> int:
    return 1 + (n_samples - window) // hop


def power_mel(signal: AudioSignal, cfg: FeatureConfig = FeatureConfig(),
              role: str = ROLE_CLEAN) -> FeatureSequence:
    """Windowed power spectra -> mel bands -> floor -> power law."""
    fs = signal.sample_rate
    window = cfg.window_samples(fs)
    hop = cfg.hop_samples(fs)
    if cfg.fft_size < window:
        raise ValueError(f"fft_size {cfg.fft_size} is smaller than the {window}-sample window")
    n = len(signal)
    if n < window:
        raise ValueError(f"signal of {n} samples is shorter than one {window}-sample window")

    count = num_frames_for(n, window, hop)
    x = signal.samples
    stride = x.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        x, shape=(count, window), strides=(hop * stride, stride), writeable=False
    )
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window) / window)
    spectra = np.fft.rfft(frames * hann, n=cfg.fft_size, axis=1)
    power = spectra.real ** 2 + spectra.imag ** 2
    mel = power @ mel_filterbank(cfg.num_mel, cfg.fft_size, fs).T
    feats = np.maximum(mel, cfg.floor_epsilon) ** cfg.power_exponent
    return FeatureSequence(feats, role)


def feature_bytes(seq: FeatureSequence) -> bytes:
    """Binary dump: b"NEF1", u32 num_frames, u32 num_mel, row-major f32,
    all little-endian."""
    header = MAGIC + struct.pack("<II", seq.num_frames, seq.num_mel)
    return header + seq.frames.astype("<f4").tobytes()


def write_features(path, seq: FeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_bytes(seq))


def read_features(path, role: str = ROLE_CLEAN) -> FeatureSequence:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated header")
        num_frames, num_mel = struct.unpack("<II", header)
        payload = fh.read()
    expected = 4 * num_frames * num_mel
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload of {len(payload)} bytes, expected {expected}"
        )
    frames = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return FeatureSequence(frames.reshape(num_frames, num_mel), role)
