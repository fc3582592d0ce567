"""Joint-loss assembly and the curriculum schedules that drive it.

Three scheduled scalars evolve with training progress: the clean-feature
blend weight w (1 -> 0 linearly over a horizon of epochs), the
enhancement-loss weight lambda (same shape, independently configurable
horizon), and the learning rate (warm ramp after each pre-training event,
a plateau, then Newbob halvings driven by dev-loss stagnation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .features import FeatureSequence, ROLE_COMBINED


@dataclass(frozen=True)
class CurriculumState:
    """Training progress snapshot.

    ``epochs_completed`` may be fractional so the schedules move smoothly
    within an epoch.  ``pretrain_event`` is the epoch at which the most
    recent structural change (layer added, pool size changed) happened, or
    None outside pre-training.  ``dev_loss_history`` holds per-epoch dev
    losses from the end of the plateau onward and feeds the Newbob decay.
    """

    epochs_completed: float
    schedule_horizon: float = 8.0
    lambda_horizon: float | None = None
    pretrain_event: float | None = None
    dev_loss_history: tuple = ()

    def __post_init__(self):
        if self.epochs_completed < 0:
            raise ValueError("epochs_completed must be non-negative")
        if self.schedule_horizon <= 0:
            raise ValueError("schedule horizon must be positive")
        if self.lambda_horizon is not None and self.lambda_horizon <= 0:
            raise ValueError("lambda horizon must be positive")
        if self.pretrain_event is not None and self.pretrain_event > self.epochs_completed:
            raise ValueError("pretrain event cannot lie in the future")
        object.__setattr__(self, "dev_loss_history", tuple(self.dev_loss_history))


@dataclass(frozen=True)
class LrConfig:
    """Learning-rate schedule constants."""

    base_lr: float = 1.0e-4
    peak_lr: float = 3.0e-4
    ramp_epochs: float = 0.25
    pretrain_span: float = 2.25
    hold_until: float = 8.0
    newbob_threshold: float = 0.005
    lr_floor: float = 1.0e-6


DEFAULT_LR = LrConfig()


@dataclass(frozen=True)
class LossBundle:
    ce: float
    ctc: float
    mse: float
    lam: float
    total: float


def schedule_w(state: CurriculumState) -> float:
    """Clean-feature blend weight: 1 at the start, linearly down to 0 at
    the horizon, clamped there."""
    return max(0.0, 1.0 - state.epochs_completed / state.schedule_horizon)


def schedule_lambda(state: CurriculumState) -> float:
    """Enhancement-loss weight; same linear decay, its own horizon."""
    horizon = state.lambda_horizon
    if horizon is None:
        horizon = state.schedule_horizon
    return max(0.0, 1.0 - state.epochs_completed / horizon)


def schedule_lr(state: CurriculumState, cfg: LrConfig = DEFAULT_LR) -> float:
    """Learning rate for the current training position.

    Inside the pre-training span each structural event restarts a linear
    ramp from base_lr to peak_lr; the rate then holds at peak_lr until
    ``hold_until`` epochs.  Beyond that, each epoch whose relative
    dev-loss improvement falls below the Newbob threshold halves the
    rate, floored at ``lr_floor``.
    """
    e = state.epochs_completed
    if state.pretrain_event is not None and e < cfg.pretrain_span:
        t = (e - state.pretrain_event) / cfg.ramp_epochs
        return cfg.base_lr + min(1.0, t) * (cfg.peak_lr - cfg.base_lr)
    if e <= cfg.hold_until:
        return cfg.peak_lr
    halvings = 0
    hist = state.dev_loss_history
    for prev, cur in zip(hist, hist[1:]):
        if prev <= 0:
            raise ValueError("dev losses must be positive")
        if (prev - cur) / prev < cfg.newbob_threshold:
            halvings += 1
    return max(cfg.peak_lr * 0.5 ** halvings, cfg.lr_floor)


def gaef_combine(x_enh: FeatureSequence, x_clean: FeatureSequence, w: float) -> FeatureSequence:
    """Convex blend of enhanced and clean features: (1-w) enh + w clean."""
    if x_enh.frames.shape != x_clean.frames.shape:
        raise ValueError("feature shapes differ")
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")
    return FeatureSequence((1.0 - w) * x_enh.frames + w * x_clean.frames, ROLE_COMBINED)


def mse_loss(x_enh: FeatureSequence, x_clean: FeatureSequence) -> float:
    """Mean over all frames and bands of squared differences."""
    if x_enh.frames.shape != x_clean.frames.shape:
        raise ValueError("feature shapes differ")
    diff = x_enh.frames - x_clean.frames
    return float(np.mean(diff * diff))


def ce_loss(log_probs: np.ndarray, targets) -> float:
    """Mean negative log-probability of the target labels."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if log_probs.ndim != 2:
        raise ValueError("log_probs must be [L x V]")
    L, V = log_probs.shape
    if targets.shape != (L,):
        raise ValueError(f"expected {L} targets, got {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= V):
        raise ValueError("target label outside vocabulary")
    return float(-np.mean(log_probs[np.arange(L), targets]))


def ctc_forward_loss(log_probs: np.ndarray, targets) -> float:
    """Negative log-probability that any blank-augmented alignment collapses
    to the target sequence.

    The blank symbol is the last vocabulary index.  Targets that cannot fit
    in the given number of frames yield +inf.
    """
    log_probs = np.ascontiguousarray(log_probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if log_probs.ndim != 2:
        raise ValueError("log_probs must be [T x (V+1)]")
    T, width = log_probs.shape
    if T < 1 or width < 2:
        raise ValueError("need at least one frame and one non-blank symbol")
    blank = width - 1
    if targets.ndim != 1:
        raise ValueError("targets must be a label sequence")
    if np.any(targets < 0) or np.any(targets >= blank):
        raise ValueError("target label outside vocabulary (blank cannot be a target)")

    ext = np.full(2 * targets.shape[0] + 1, blank, dtype=np.int64)
    ext[1::2] = targets
    S = ext.shape[0]
    skip_ok = np.zeros(S, dtype=np.bool_)
    for s in range(2, S):
        skip_ok[s] = ext[s] != blank and ext[s] != ext[s - 2]
    loss = _kernels.ctc_forward_core(log_probs, ext, skip_ok)
    return math.inf if math.isinf(loss) else float(loss)


def joint_loss(ce: float, ctc: float, mse: float, state: CurriculumState) -> LossBundle:
    """Total training loss: ce + ctc + lambda * mse with the scheduled lambda."""
    for name, value in (("ce", ce), ("mse", mse)):
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"{name} loss must be finite and non-negative")
    if math.isnan(ctc) or ctc < 0:
        raise ValueError("ctc loss must be non-negative (inf marks an impossible target)")
    lam = schedule_lambda(state)
    return LossBundle(ce=ce, ctc=ctc, mse=mse, lam=lam, total=ce + ctc + lam * mse)


def schedule_trace_lines(
    epochs: np.ndarray,
    schedule_horizon: float = 8.0,
    lambda_horizon: float | None = None,
    pretrain_events=(0.0,),
    lr_cfg: LrConfig = DEFAULT_LR,
) -> list:
    """Render ``epoch w lambda lr`` text lines over an epoch grid.

    ``pretrain_events`` lists the epochs of structural changes; the most
    recent one at or before each grid point drives the warm ramp.
    """
    events = sorted(pretrain_events)
    lines = []
    for e in np.asarray(epochs, dtype=np.float64):
        current = None
        for ev in events:
            if ev <= e:
                current = ev
        state = CurriculumState(
            epochs_completed=float(e),
            schedule_horizon=schedule_horizon,
            lambda_horizon=lambda_horizon,
            pretrain_event=current,
        )
        lines.append(
            f"{e:.6g} {schedule_w(state):.10g} {schedule_lambda(state):.10g} "
            f"{schedule_lr(state, lr_cfg):.10g}"
        )
    return lines
