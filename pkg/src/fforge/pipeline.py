"""The example server: scene sampling, record rendering, and verification.

Every record is a pure function of (config, manifest, seed, index).  Each
example derives independent RNG streams from the (seed, index) pair, so
any partitioning of indices across workers produces identical output.
"""

from __future__ import annotations

import ast
import math
import sys
import time
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .audio import AudioSignal, read_wav
from .config import AugmentationConfig, Manifest
from .den import den_normalize
from .features import FeatureConfig, FeatureSequence, ROLE_AUGMENTED, ROLE_CLEAN, \
    feature_bytes, power_mel, read_features, write_features
from .losses import CurriculumState, schedule_lambda, schedule_lr, schedule_w
from .room import AugmentationScene, RoomSpec, direct_path, mix_scene, \
    sabine_reflection_coefficient

WALL_CLEARANCE = 0.2
MIN_MIC_DISTANCE = 0.1
SCENE_RETRIES = 100

_STREAM_SCENE = 0
_STREAM_EXAMPLE = 1
_STREAM_MIX = 2


class SceneInfeasibleError(RuntimeError):
    """No valid scene found within the retry budget."""


@dataclass(frozen=True)
class TrainingExample:
    utterance_id: str
    index: int
    seed: int
    x_aug: FeatureSequence
    x_clean: FeatureSequence
    meta: dict
    w: float
    lam: float
    lr: float


def _rng(seed: int, index: int, stream: int):
    return np.random.default_rng(np.random.SeedSequence((seed, index, stream)))


def _sample_position(rng, dims):
    return tuple(
        float(rng.uniform(WALL_CLEARANCE, d - WALL_CLEARANCE)) for d in dims
    )


def sample_scene(cfg: AugmentationConfig, rng_seed: int, utterance_index: int) -> AugmentationScene:
    """Deterministic scene draw for one utterance index.

    Uniform room dimensions and T60 (converted to a wall reflection
    coefficient by Sabine inversion), positions uniform inside the room
    with a wall clearance, SNR uniform over the configured set.  Draws
    that cannot be realized (too-dead rooms, coincident positions) are
    retried on the same stream, up to a budget.
    """
    rng = _rng(rng_seed, utterance_index, _STREAM_SCENE)
    lo, hi = cfg.room_dim_range
    for _ in range(SCENE_RETRIES):
        dims = tuple(float(v) for v in rng.uniform(lo, hi, 3))
        t60 = float(rng.uniform(*cfg.t60_range))
        try:
            refl = sabine_reflection_coefficient(t60, dims)
        except ValueError:
            continue
        if min(dims) <= 2 * WALL_CLEARANCE:
            continue
        mic = _sample_position(rng, dims)
        target = _sample_position(rng, dims)
        if math.dist(mic, target) < MIN_MIC_DISTANCE:
            continue
        n_noise = int(rng.integers(cfg.noise_count_range[0], cfg.noise_count_range[1] + 1))
        noise_positions = []
        ok = True
        for _ in range(n_noise):
            pos = _sample_position(rng, dims)
            if math.dist(mic, pos) < MIN_MIC_DISTANCE:
                ok = False
                break
            noise_positions.append(pos)
        if not ok:
            continue
        snr = float(cfg.snr_db_set[int(rng.integers(len(cfg.snr_db_set)))])
        room = RoomSpec(
            dimensions=dims,
            reflection_coefficient=refl,
            sample_rate=cfg.sample_rate,
        )
        return AugmentationScene(
            room=room,
            target_position=target,
            mic_position=mic,
            noise_positions=tuple(noise_positions),
            target_snr_db=snr,
            max_reflection_order=cfg.max_reflection_order,
        )
    raise SceneInfeasibleError(
        f"no feasible scene for index {utterance_index} after {SCENE_RETRIES} attempts"
    )


def _invert_sabine(room: RoomSpec) -> float:
    lx, ly, lz = room.dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + ly * lz + lx * lz)
    absorption = 1.0 - room.reflection_coefficient ** 2
    return 0.161 * volume / (surface * absorption)


def state_for_index(cfg: AugmentationConfig, index: int) -> CurriculumState:
    """Curriculum position of one record; pre-training starts at epoch 0."""
    epochs = index / cfg.examples_per_epoch
    return CurriculumState(
        epochs_completed=epochs,
        schedule_horizon=cfg.schedule_horizon,
        pretrain_event=0.0,
    )


def make_example(
    clean: AudioSignal,
    noises,
    cfg: AugmentationConfig,
    state: CurriculumState,
    seed: int,
    index: int,
    utterance_id: str = "",
    feature_cfg: FeatureConfig = FeatureConfig(),
) -> TrainingExample:
    """Render one training example: simulate, normalize, featurize, tag.

    A clean-passthrough draw skips the simulation entirely and emits the
    clean features on both branches.
    """
    rng = _rng(seed, index, _STREAM_EXAMPLE)
    passthrough = bool(rng.uniform() < cfg.clean_passthrough_prob)
    meta = {
        "utterance_id": utterance_id,
        "index": index,
        "seed": seed,
        "sample_rate": cfg.sample_rate,
        "passthrough": passthrough,
    }
    if passthrough:
        x_clean = power_mel(clean, feature_cfg, role=ROLE_CLEAN)
        x_aug = FeatureSequence(x_clean.frames, ROLE_AUGMENTED)
        meta.update(delay_samples=0, gain=1.0)
    else:
        scene = sample_scene(cfg, seed, index)
        picks = ()
        if noises and scene.noise_positions:
            idx = rng.integers(0, len(noises), len(scene.noise_positions))
            picks = tuple(int(i) for i in idx)
            scene = scene.with_noise_signals([noises[i] for i in picks])
        mix_seed = int(_rng(seed, index, _STREAM_MIX).integers(0, 2 ** 31))
        s_aug = mix_scene(scene, clean, mix_seed)
        den_res = den_normalize(
            clean, s_aug, direct_path(scene.target_position, scene.mic_position),
            scene.room,
        )
        x_aug = power_mel(s_aug, feature_cfg, role=ROLE_AUGMENTED)
        x_clean = power_mel(den_res.normalized_clean, feature_cfg, role=ROLE_CLEAN)
        meta.update(
            room_dims=scene.room.dimensions,
            reflection_coeff=scene.room.reflection_coefficient,
            t60=_invert_sabine(scene.room),
            snr_db=scene.target_snr_db,
            max_order=scene.max_reflection_order,
            target_pos=scene.target_position,
            mic_pos=scene.mic_position,
            noise_positions=scene.noise_positions,
            noise_picks=picks,
            mix_seed=mix_seed,
            delay_samples=den_res.applied_delay,
            gain=den_res.applied_gain,
        )

    w = schedule_w(state)
    lam = schedule_lambda(state)
    lr = schedule_lr(state)
    meta.update(
        epochs=state.epochs_completed,
        w=w,
        lam=lam,
        lr=lr,
        num_frames=x_aug.num_frames,
        num_mel=x_aug.num_mel,
    )
    return TrainingExample(
        utterance_id=utterance_id,
        index=index,
        seed=seed,
        x_aug=x_aug,
        x_clean=x_clean,
        meta=meta,
        w=w,
        lam=lam,
        lr=lr,
    )


# ---------------------------------------------------------------------------
# Record files: ex<index>.aug.nef, ex<index>.clean.nef, ex<index>.meta
# ---------------------------------------------------------------------------

def record_paths(out_dir, index: int):
    base = Path(out_dir)
    return (
        base / f"ex{index:06d}.aug.nef",
        base / f"ex{index:06d}.clean.nef",
        base / f"ex{index:06d}.meta",
    )


def meta_text(meta: dict) -> str:
    return "".join(f"{key} = {meta[key]!r}\n" for key in sorted(meta))


def parse_meta(text: str) -> dict:
    meta = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ValueError(f"meta line {line_no}: expected 'key = value'")
        meta[key] = ast.literal_eval(value)
    return meta


def write_record(out_dir, example: TrainingExample) -> None:
    aug_path, clean_path, meta_path = record_paths(out_dir, example.index)
    write_features(aug_path, example.x_aug)
    write_features(clean_path, example.x_clean)
    meta_path.write_text(meta_text(example.meta), encoding="ascii")


def _clean_for_index(manifest: Manifest, index: int):
    path = manifest.clean[index % len(manifest.clean)]
    return path, Path(path).stem


class _Renderer:
    """Per-process record builder with a small WAV cache."""

    def __init__(self, cfg: AugmentationConfig, manifest: Manifest, out_dir):
        self.cfg = cfg
        self.manifest = manifest
        self.out_dir = out_dir
        self._wav_cache = {}
        self._noises = None

    def _wav(self, path) -> AudioSignal:
        if path not in self._wav_cache:
            sig = read_wav(path)
            if sig.sample_rate != self.cfg.sample_rate:
                raise ValueError(
                    f"{path}: sample rate {sig.sample_rate} does not match "
                    f"configured {self.cfg.sample_rate}"
                )
            self._wav_cache[path] = sig
        return self._wav_cache[path]

    def noises(self):
        if self._noises is None:
            self._noises = tuple(self._wav(p) for p in self.manifest.noise)
        return self._noises

    def build(self, index: int) -> TrainingExample:
        clean_path, stem = _clean_for_index(self.manifest, index)
        clean = self._wav(clean_path)
        state = state_for_index(self.cfg, index)
        return make_example(
            clean, self.noises(), self.cfg, state, self.cfg.seed, index,
            utterance_id=f"{stem}-{index:06d}",
        )

    def render(self, index: int) -> None:
        write_record(self.out_dir, self.build(index))


def _worker_batch(args):
    cfg, manifest, out_dir, indices, report_every = args
    renderer = _Renderer(cfg, manifest, out_dir)
    done = 0
    for index in indices:
        renderer.render(index)
        done += 1
        if report_every and done % report_every == 0:
            print(f"  ... {done}/{len(indices)} records in worker batch", file=sys.stderr)
    return done


def run_server(
    cfg: AugmentationConfig,
    manifest: Manifest,
    out_dir,
    count: int,
    workers: int = 1,
) -> int:
    """Write ``count`` records to ``out_dir``; returns the number written.

    Worker j of N handles indices congruent to j mod N; per-index seed
    streams make the output independent of the worker count.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if count == 0:
        print("wrote 0 records", file=sys.stderr)
        return 0
    if not manifest.clean:
        raise ValueError("manifest lists no clean utterances")

    started = time.perf_counter()
    batches = [
        (cfg, manifest, out_dir, list(range(j, count, workers)), max(1, count // (workers * 5)))
        for j in range(min(workers, count))
    ]
    if workers == 1:
        total = _worker_batch(batches[0])
    else:
        with get_context().Pool(processes=len(batches)) as pool:
            total = sum(pool.map(_worker_batch, batches))
    elapsed = time.perf_counter() - started
    rate = total / elapsed if elapsed > 0 else float("inf")
    print(f"wrote {total} records in {elapsed:.2f} s ({rate:.1f} utt/s)", file=sys.stderr)
    return total


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class VerifyReport:
    checked: int
    regenerated: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


_REQUIRED_META = (
    "utterance_id", "index", "seed", "sample_rate", "passthrough",
    "epochs", "w", "lam", "lr", "num_frames", "num_mel",
)


def verify_records(
    records_dir,
    fraction: float = 1.0,
    cfg: AugmentationConfig = None,
    manifest: Manifest = None,
) -> VerifyReport:
    """Check emitted records.

    Structural checks always run on every record: parseable metadata,
    readable feature payloads, matching shapes, finite non-negative
    entries.  When a config and manifest are supplied, a ``fraction`` of
    records is additionally regenerated from its seed and compared byte
    for byte.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    records_dir = Path(records_dir)
    meta_paths = sorted(records_dir.glob("ex*.meta"))
    failures = []
    indexed = []
    for meta_path in meta_paths:
        name = meta_path.name
        try:
            meta = parse_meta(meta_path.read_text(encoding="ascii"))
            for key in _REQUIRED_META:
                if key not in meta:
                    raise ValueError(f"missing meta key '{key}'")
            index = int(meta["index"])
            aug_path, clean_path, _ = record_paths(records_dir, index)
            x_aug = read_features(aug_path, ROLE_AUGMENTED)
            x_clean = read_features(clean_path, ROLE_CLEAN)
            if x_aug.frames.shape != x_clean.frames.shape:
                raise ValueError("augmented and clean feature shapes differ")
            if x_aug.frames.shape != (int(meta["num_frames"]), int(meta["num_mel"])):
                raise ValueError("feature shape does not match metadata")
            indexed.append(index)
        except (ValueError, OSError) as exc:
            failures.append(f"{name}: {exc}")

    regenerated = 0
    if cfg is not None and manifest is not None and indexed:
        step = max(1, round(1.0 / fraction))
        renderer = _Renderer(cfg, manifest, records_dir)
        for index in indexed[::step]:
            aug_path, clean_path, meta_path = record_paths(records_dir, index)
            try:
                example = renderer.build(index)
                if feature_bytes(example.x_aug) != aug_path.read_bytes():
                    raise ValueError("augmented payload differs on regeneration")
                if feature_bytes(example.x_clean) != clean_path.read_bytes():
                    raise ValueError("clean payload differs on regeneration")
                if meta_text(example.meta) != meta_path.read_text(encoding="ascii"):
                    raise ValueError("metadata differs on regeneration")
                regenerated += 1
            except (ValueError, OSError) as exc:
                failures.append(f"ex{index:06d}: {exc}")

    return VerifyReport(checked=len(meta_paths), regenerated=regenerated, failures=failures)
