"""Image-method room simulation and reverberant scene mixing.

A cuboid room with one uniform wall reflection coefficient is simulated by
mirroring the source across the walls.  Each mirror image contributes one
impulse to the room impulse response: the tap sits at sample
``ceil(d * f_s / c0)`` and carries amplitude ``r**g / d``, where ``d`` is
the image-to-microphone distance and ``g`` the number of wall reflections
along the path.  The infinite lattice is truncated at a maximum total
reflection count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .audio import AudioSignal

DEFAULT_SPEED_OF_SOUND = 343.0
DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class RoomSpec:
    """Cuboid room geometry plus the physical constants of the simulation.

    ``reflection_coefficient`` applies uniformly to all six walls.
    """

    dimensions: tuple
    reflection_coefficient: float
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dimensions)
        if len(dims) != 3 or any(v <= 0 for v in dims):
            raise ValueError("room dimensions must be three positive lengths")
        if not 0.0 <= self.reflection_coefficient < 1.0:
            raise ValueError("reflection coefficient must lie in [0, 1)")
        if self.speed_of_sound <= 0:
            raise ValueError("speed of sound must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "dimensions", dims)


@dataclass(frozen=True, order=True)
class ImagePath:
    """One acoustic path: image-to-microphone distance and reflection count."""

    distance: float
    reflection_count: int

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("path distance must be non-negative")
        if self.reflection_count < 0:
            raise ValueError("reflection count must be non-negative")

    def delay_samples(self, sample_rate, speed_of_sound) -> int:
        return math.ceil(self.distance * sample_rate / speed_of_sound)


@dataclass(frozen=True)
class RoomImpulseResponse:
    """Sparse tap list (delay in samples, amplitude), sorted by delay.

    Coincident delays are summed into one tap at construction; zero
    amplitudes are dropped.
    """

    taps: tuple
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        canon = _canonical_taps(self.taps)
        object.__setattr__(self, "taps", canon)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t[0] for t in self.taps], dtype=np.int64)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t[1] for t in self.taps], dtype=np.float64)

    @property
    def max_delay(self) -> int:
        return self.taps[-1][0] if self.taps else 0

    def dense(self) -> np.ndarray:
        h = np.zeros(self.max_delay + 1 if self.taps else 1)
        for d, a in self.taps:
            h[d] = a
        return h


def _canonical_taps(taps):
    merged = {}
    for delay, amp in taps:
        d = int(delay)
        if d < 0:
            raise ValueError("tap delay must be non-negative")
        merged[d] = merged.get(d, 0.0) + float(amp)
    return tuple((d, merged[d]) for d in sorted(merged) if merged[d] != 0.0)


@dataclass(frozen=True)
class AugmentationScene:
    """Everything needed to render one reverberant noisy mixture."""

    room: RoomSpec
    target_position: tuple
    mic_position: tuple
    noise_positions: tuple = ()
    noise_signals: tuple = ()
    target_snr_db: float = math.inf
    max_reflection_order: int = 10

    def __post_init__(self):
        object.__setattr__(self, "target_position", _as_point(self.target_position))
        object.__setattr__(self, "mic_position", _as_point(self.mic_position))
        object.__setattr__(
            self, "noise_positions", tuple(_as_point(p) for p in self.noise_positions)
        )
        object.__setattr__(self, "noise_signals", tuple(self.noise_signals))
        for pos in (self.target_position, self.mic_position, *self.noise_positions):
            _require_inside(self.room, pos)
        if math.isnan(self.target_snr_db):
            raise ValueError("target SNR must not be NaN")
        if self.max_reflection_order < 0:
            raise ValueError("max reflection order must be non-negative")
        if self.noise_signals and len(self.noise_signals) != len(self.noise_positions):
            raise ValueError(
                "noise_signals must be empty or match noise_positions in length"
            )

    def with_noise_signals(self, signals) -> "AugmentationScene":
        return replace(self, noise_signals=tuple(signals))


def _as_point(p):
    t = tuple(float(v) for v in p)
    if len(t) != 3:
        raise ValueError("positions must be 3-vectors")
    return t


def _require_inside(room, pos):
    for v, dim in zip(pos, room.dimensions):
        if not 0.0 < v < dim:
            raise ValueError(f"position {pos} is not strictly inside the room")


def _axis_candidates(coord, length, max_order):
    """Mirror candidates for one axis.

    Images live at ``s + 2*m*L`` (reflection count ``2|m|``) and at
    ``-s + 2*m*L`` (count ``|2m - 1|``); only counts <= max_order survive.
    """
    coords = []
    counts = []
    half = max_order // 2
    for m in range(-half, half + 1):
        coords.append(coord + 2.0 * m * length)
        counts.append(2 * abs(m))
    lo = -((max_order - 1) // 2)
    hi = (max_order + 1) // 2
    if max_order >= 1:
        for m in range(lo, hi + 1):
            coords.append(-coord + 2.0 * m * length)
            counts.append(abs(2 * m - 1))
    return np.array(coords, dtype=np.float64), np.array(counts, dtype=np.int64)


def enumerate_images(room: RoomSpec, source, mic, max_order: int) -> list:
    """All mirror-image paths with total reflection count <= max_order.

    Returned paths are ordered by (reflection_count, distance); ties are
    broken on the image coordinates so the ordering is fully deterministic.
    """
    source = _as_point(source)
    mic = _as_point(mic)
    _require_inside(room, source)
    _require_inside(room, mic)
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if source == mic:
        raise ValueError("source coincides with microphone (zero path length)")

    cand = [
        _axis_candidates(source[a], room.dimensions[a], max_order) for a in range(3)
    ]
    rows = _kernels.image_lattice_core(
        cand[0][0], cand[0][1], cand[1][0], cand[1][1], cand[2][0], cand[2][1],
        np.array(mic, dtype=np.float64), max_order,
    )
    if np.any(rows[:, 0] == 0.0):
        raise ValueError("degenerate zero-length image path")
    order = np.lexsort((rows[:, 4], rows[:, 3], rows[:, 2], rows[:, 0], rows[:, 1]))
    rows = rows[order]
    return [ImagePath(float(d), int(g)) for d, g in zip(rows[:, 0], rows[:, 1])]


def direct_path(source, mic) -> ImagePath:
    """The zero-reflection path between source and microphone."""
    source = _as_point(source)
    mic = _as_point(mic)
    d = math.dist(source, mic)
    return ImagePath(d, 0)


def generate_rir(room: RoomSpec, source, mic, max_order: int) -> RoomImpulseResponse:
    """Room impulse response: one tap per image, coincident delays summed."""
    paths = enumerate_images(room, source, mic, max_order)
    fs = room.sample_rate
    c0 = room.speed_of_sound
    r = room.reflection_coefficient
    taps = [
        (p.delay_samples(fs, c0), r ** p.reflection_count / p.distance)
        for p in paths
    ]
    return RoomImpulseResponse(tuple(taps), fs)


def convolve(signal: AudioSignal, rir: RoomImpulseResponse) -> AudioSignal:
    """Sparse-tap convolution; output length is input length + max delay."""
    if signal.sample_rate != rir.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: signal {signal.sample_rate} Hz, "
            f"RIR {rir.sample_rate} Hz"
        )
    if not rir.taps:
        return AudioSignal(np.zeros(len(signal)), signal.sample_rate)
    out = _kernels.sparse_convolve_core(
        signal.samples, rir.delays, rir.amplitudes
    )
    return AudioSignal(out, signal.sample_rate)


def _fit_length(x: np.ndarray, n: int, rng) -> np.ndarray:
    """Loop short noise to length n; crop long noise from a seeded offset."""
    if x.shape[0] == 0:
        raise ValueError("noise signal is empty")
    if x.shape[0] == n:
        return x
    if x.shape[0] < n:
        reps = -(-n // x.shape[0])
        return np.tile(x, reps)[:n]
    offset = int(rng.integers(0, x.shape[0] - n + 1))
    return x[offset:offset + n]


def mix_scene(scene: AugmentationScene, target: AudioSignal, rng_seed: int) -> AudioSignal:
    """Render the reverberant mixture of target speech and scaled noises.

    The target is convolved with its room response; each noise source is
    convolved with its own response, and all noises share one scaling
    coefficient chosen so that the energy ratio of the reverberant target
    to the summed reverberant noise equals ``target_snr_db``.  An infinite
    SNR zeroes the noise entirely.  Deterministic for a fixed seed.
    """
    if target.sample_rate != scene.room.sample_rate:
        raise ValueError("target sample rate does not match the room")
    h0 = generate_rir(
        scene.room, scene.target_position, scene.mic_position,
        scene.max_reflection_order,
    )
    reverb_target = convolve(target, h0).samples
    n_out = reverb_target.shape[0]

    if not scene.noise_signals or math.isinf(scene.target_snr_db):
        return AudioSignal(reverb_target, target.sample_rate)

    target_energy = float(np.dot(reverb_target, reverb_target))
    if target_energy == 0.0:
        raise ValueError("target signal has zero energy; SNR is undefined")

    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    noise_sum = np.zeros(n_out)
    for pos, sig in zip(scene.noise_positions, scene.noise_signals):
        if sig.sample_rate != scene.room.sample_rate:
            raise ValueError("noise sample rate does not match the room")
        h = generate_rir(scene.room, pos, scene.mic_position, scene.max_reflection_order)
        raw = _fit_length(sig.samples, n_out, rng)
        noise_sum += _kernels.sparse_convolve_core(raw, h.delays, h.amplitudes)[:n_out]

    noise_energy = float(np.dot(noise_sum, noise_sum))
    if noise_energy == 0.0:
        raise ValueError("combined noise has zero energy; SNR cannot be realized")
    alpha = math.sqrt(target_energy / (noise_energy * 10.0 ** (scene.target_snr_db / 10.0)))
    return AudioSignal(reverb_target + alpha * noise_sum, target.sample_rate)


def sabine_reflection_coefficient(t60: float, dimensions) -> float:
    """Uniform wall reflection coefficient matching a Sabine T60.

    Sabine with uniform absorption: T60 = 0.161 * V / (a * S) with a the
    absorption coefficient over total surface S, so a = 0.161 * V / (S * T60)
    and r = sqrt(1 - a).  Raises if the requested T60 is too short to be
    realized by the room (a >= 1).
    """
    if t60 <= 0:
        raise ValueError("T60 must be positive")
    lx, ly, lz = (float(v) for v in dimensions)
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + ly * lz + lx * lz)
    absorption = 0.161 * volume / (surface * t60)
    if absorption >= 1.0:
        raise ValueError(
            f"T60 of {t60} s is unreachable in a room of volume {volume:.2f} m^3"
        )
    return math.sqrt(1.0 - absorption)


def save_rir_text(path, rir: RoomImpulseResponse) -> None:
    """Write taps as \"delay_samples amplitude\" lines."""
    with open(path, "w", encoding="ascii") as fh:
        for delay, amp in rir.taps:
            fh.write(f"{delay} {amp!r}\n")


def load_rir_text(path, sample_rate: int) -> RoomImpulseResponse:
    taps = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'delay amplitude'")
            taps.append((int(parts[0]), float(parts[1])))
    return RoomImpulseResponse(tuple(taps), sample_rate)
